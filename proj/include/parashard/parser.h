/* Copyright 2026 The Parashard Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PARASHARD_PARSER_H_
#define PARASHARD_PARSER_H_

#include <stdexcept>
#include <string>

#include "parashard/ir.h"

namespace parashard {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int col, const std::string& what)
      : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + what),
        line(line),
        col(col) {}
  int line;
  int col;
};

// Text IR, one op per line:
//   <id> = <kind>[(<args>)] [: <dtype>[<d0,d1,...>]] [{key=value, ...}]
// `#` starts a comment, `;` also separates statements, and an optional
// `@outputs a, b` line designates the program outputs (default: all sinks).
// Matmul arguments accept a `^T` suffix as shorthand for the transpose flags.
TensorProgram parse_program(const std::string& text);

// JSON equivalent with identical field names:
//   {"ops": [{"id", "kind", "inputs", "shape", "elem_bytes", "attrs", "pin"}],
//    "outputs": [...]}
TensorProgram ParseProgramJson(const std::string& json_text);

// Canonical writers; parse(Serialize(g)) round-trips byte-identically.
std::string SerializeProgram(const TensorProgram& g);
std::string SerializeProgramJson(const TensorProgram& g);

}  // namespace parashard

#endif  // PARASHARD_PARSER_H_
