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

#include "parashard/parser.h"

#include <cctype>
#include <sstream>

#include "nlohmann/json.hpp"

namespace parashard {

namespace {

using json = nlohmann::ordered_json;

struct Dtype {
  const char* name;
  int64_t bytes;
};
constexpr Dtype kDtypes[] = {
    {"f32", 4}, {"f16", 2}, {"bf16", 2}, {"f64", 8}, {"i32", 4}, {"i8", 1},
};

const char* DtypeName(int64_t bytes) {
  switch (bytes) {
    case 2: return "f16";
    case 8: return "f64";
    case 1: return "i8";
    default: return "f32";
  }
}

// Cursor over one statement, tracking column for error messages.
class Scanner {
 public:
  Scanner(const std::string& s, int line, int col0) : s_(s), line_(line), col0_(col0) {}

  void SkipWs() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool AtEnd() {
    SkipWs();
    return pos_ >= s_.size();
  }
  char Peek() {
    SkipWs();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  bool Consume(char c) {
    SkipWs();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void Expect(char c) {
    if (!Consume(c)) Error(std::string("expected '") + c + "'");
  }
  std::string Ident() {
    SkipWs();
    size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
            s_[pos_] == '.' || s_[pos_] == '/')) {
      ++pos_;
    }
    if (pos_ == start) Error("expected identifier");
    return s_.substr(start, pos_ - start);
  }
  int64_t Integer() {
    SkipWs();
    size_t start = pos_;
    if (pos_ < s_.size() && s_[pos_] == '-') ++pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == start || (s_[start] == '-' && pos_ == start + 1)) Error("expected integer");
    return std::stoll(s_.substr(start, pos_ - start));
  }
  [[noreturn]] void Error(const std::string& msg) {
    throw ParseError(line_, col0_ + static_cast<int>(pos_) + 1, msg);
  }

 private:
  const std::string& s_;
  size_t pos_ = 0;
  int line_;
  int col0_;
};

// dtype[d0,d1,...] -> TensorShape
TensorShape ParseShape(Scanner& sc) {
  std::string dt = sc.Ident();
  int64_t bytes = -1;
  for (const auto& d : kDtypes) {
    if (dt == d.name) bytes = d.bytes;
  }
  if (bytes < 0) sc.Error("unknown dtype '" + dt + "'");
  TensorShape shape;
  shape.elem_bytes = bytes;
  sc.Expect('[');
  if (!sc.Consume(']')) {
    for (;;) {
      shape.dims.push_back(sc.Integer());
      if (sc.Consume(']')) break;
      sc.Expect(',');
    }
  }
  return shape;
}

void ParseAttrs(Scanner& sc, Operator& op) {
  if (sc.Consume('}')) return;
  for (;;) {
    std::string key = sc.Ident();
    sc.Expect('=');
    if (key == "perm") {
      sc.Expect('[');
      for (;;) {
        op.perm.push_back(static_cast<int>(sc.Integer()));
        if (sc.Consume(']')) break;
        sc.Expect(',');
      }
    } else if (key == "axis") {
      op.axis = static_cast<int>(sc.Integer());
    } else if (key == "transpose_a") {
      op.transpose_a = sc.Integer() != 0;
    } else if (key == "transpose_b") {
      op.transpose_b = sc.Integer() != 0;
    } else if (key == "fn") {
      op.fn = sc.Ident();
    } else {
      sc.Error("unknown attribute '" + key + "'");
    }
    if (sc.Consume('}')) break;
    sc.Expect(',');
  }
}

}  // namespace

TensorProgram parse_program(const std::string& text) {
  TensorProgram g;
  std::vector<OpId> outputs;

  std::istringstream lines(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(lines, raw)) {
    ++lineno;
    // Strip comments, then split on ';' so one-line programs work.
    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    size_t begin = 0;
    while (begin <= raw.size()) {
      size_t end = raw.find(';', begin);
      std::string stmt = raw.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
      size_t col0 = begin;
      begin = (end == std::string::npos) ? raw.size() + 1 : end + 1;

      Scanner sc(stmt, lineno, static_cast<int>(col0));
      if (sc.AtEnd()) continue;

      if (sc.Consume('@')) {
        std::string directive = sc.Ident();
        if (directive != "outputs") sc.Error("unknown directive '@" + directive + "'");
        for (;;) {
          outputs.push_back(sc.Ident());
          if (!sc.Consume(',')) break;
        }
        if (!sc.AtEnd()) sc.Error("trailing input after @outputs list");
        continue;
      }

      Operator op;
      op.id = sc.Ident();
      sc.Expect('=');
      std::string kind_word = sc.Ident();
      auto kind = OpKindFromName(kind_word);
      if (!kind) sc.Error("unknown op kind '" + kind_word + "'");
      op.kind = *kind;
      if (op.kind == OpKind::kUnaryElementwise && kind_word != "unary") op.fn = kind_word;

      if (sc.Consume('(')) {
        if (!sc.Consume(')')) {
          for (;;) {
            op.inputs.push_back(sc.Ident());
            if (sc.Consume('^')) {
              std::string t = sc.Ident();
              if (t != "T") sc.Error("expected ^T");
              if (op.kind != OpKind::kMatMul) sc.Error("^T is only valid on matmul arguments");
              if (op.inputs.size() == 1) {
                op.transpose_a = true;
              } else if (op.inputs.size() == 2) {
                op.transpose_b = true;
              } else {
                sc.Error("^T on extra argument");
              }
            }
            if (sc.Consume(')')) break;
            sc.Expect(',');
          }
        }
      }

      // Optional ": dtype[dims]"; the colon may be omitted (e.g. "param f32[4,8]").
      bool has_shape = false;
      if (sc.Consume(':')) {
        has_shape = true;
      } else if (std::isalpha(static_cast<unsigned char>(sc.Peek()))) {
        has_shape = true;  // bare dtype word
      }
      if (has_shape) {
        op.output_shape = ParseShape(sc);
        if (op.output_shape.dims.empty() && !op.is_source()) {
          // An empty annotation is only meaningful for scalars; keep as-is.
        }
      }
      if (sc.Consume('{')) ParseAttrs(sc, op);
      if (!sc.AtEnd()) sc.Error("trailing input after statement");

      if (has_shape && op.output_shape.dims.empty() && op.is_source()) {
        sc.Error("source op '" + op.id + "' needs a non-empty shape");
      }
      try {
        g.Add(std::move(op));
      } catch (const ValidationError& e) {
        sc.Error(e.what());
      }
    }
  }

  if (!outputs.empty()) g.SetOutputs(std::move(outputs));
  g.Validate();
  return g;
}

TensorProgram ParseProgramJson(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(1, 1, std::string("invalid JSON: ") + e.what());
  }
  TensorProgram g;
  if (!j.contains("ops") || !j["ops"].is_array()) throw ParseError(1, 1, "missing 'ops' array");
  for (const auto& jo : j["ops"]) {
    Operator op;
    op.id = jo.at("id").get<std::string>();
    auto kind = OpKindFromName(jo.at("kind").get<std::string>());
    if (!kind) throw ParseError(1, 1, "unknown op kind in op '" + op.id + "'");
    op.kind = *kind;
    if (jo.contains("inputs")) {
      for (const auto& in : jo["inputs"]) op.inputs.push_back(in.get<std::string>());
    }
    if (jo.contains("shape")) {
      op.output_shape.dims = jo["shape"].get<std::vector<int64_t>>();
      op.output_shape.elem_bytes = jo.value("elem_bytes", int64_t{4});
    }
    if (jo.contains("attrs")) {
      const auto& a = jo["attrs"];
      op.transpose_a = a.value("transpose_a", false);
      op.transpose_b = a.value("transpose_b", false);
      op.axis = a.value("axis", 0);
      op.fn = a.value("fn", std::string());
      if (a.contains("perm")) op.perm = a["perm"].get<std::vector<int>>();
    }
    if (jo.contains("pin")) {
      for (auto it = jo["pin"].begin(); it != jo["pin"].end(); ++it) {
        op.pin[std::stoi(it.key())] = it.value().get<std::string>();
      }
    }
    g.Add(std::move(op));
  }
  if (j.contains("outputs")) {
    g.SetOutputs(j["outputs"].get<std::vector<OpId>>());
  }
  g.Validate();
  return g;
}

std::string SerializeProgram(const TensorProgram& g) {
  std::ostringstream os;
  for (const Operator& op : g.ops()) {
    os << op.id << " = " << OpKindName(op.kind) << "(";
    for (size_t i = 0; i < op.inputs.size(); ++i) {
      if (i) os << ", ";
      os << op.inputs[i];
    }
    os << ") : " << DtypeName(op.output_shape.elem_bytes) << "[";
    for (size_t i = 0; i < op.output_shape.dims.size(); ++i) {
      if (i) os << ",";
      os << op.output_shape.dims[i];
    }
    os << "]";
    std::vector<std::string> attrs;
    if (op.transpose_a) attrs.push_back("transpose_a=1");
    if (op.transpose_b) attrs.push_back("transpose_b=1");
    if (!op.perm.empty()) {
      std::string p = "perm=[";
      for (size_t i = 0; i < op.perm.size(); ++i) {
        if (i) p += ",";
        p += std::to_string(op.perm[i]);
      }
      attrs.push_back(p + "]");
    }
    if ((op.kind == OpKind::kReduceSum || op.kind == OpKind::kConcat)) {
      attrs.push_back("axis=" + std::to_string(op.axis));
    }
    if (!op.fn.empty()) attrs.push_back("fn=" + op.fn);
    if (!attrs.empty()) {
      os << " {";
      for (size_t i = 0; i < attrs.size(); ++i) {
        if (i) os << ", ";
        os << attrs[i];
      }
      os << "}";
    }
    os << "\n";
  }
  os << "@outputs ";
  auto outs = g.outputs();
  for (size_t i = 0; i < outs.size(); ++i) {
    if (i) os << ", ";
    os << outs[i];
  }
  os << "\n";
  return os.str();
}

std::string SerializeProgramJson(const TensorProgram& g) {
  json j;
  j["ops"] = json::array();
  for (const Operator& op : g.ops()) {
    json jo;
    jo["id"] = op.id;
    jo["kind"] = OpKindName(op.kind);
    jo["inputs"] = op.inputs;
    jo["shape"] = op.output_shape.dims;
    jo["elem_bytes"] = op.output_shape.elem_bytes;
    json attrs = json::object();
    if (op.transpose_a) attrs["transpose_a"] = true;
    if (op.transpose_b) attrs["transpose_b"] = true;
    if (!op.perm.empty()) attrs["perm"] = op.perm;
    if (op.kind == OpKind::kReduceSum || op.kind == OpKind::kConcat) attrs["axis"] = op.axis;
    if (!op.fn.empty()) attrs["fn"] = op.fn;
    if (!attrs.empty()) jo["attrs"] = attrs;
    if (!op.pin.empty()) {
      json pin = json::object();
      for (const auto& [axis, spec] : op.pin) pin[std::to_string(axis)] = spec;
      jo["pin"] = pin;
    }
    j["ops"].push_back(jo);
  }
  j["outputs"] = g.outputs();
  return j.dump(2) + "\n";
}

}  // namespace parashard
