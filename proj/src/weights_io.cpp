#include "tgauge/weights_io.hpp"

#include <fstream>
#include <sstream>

namespace tgauge {

namespace {

using Problems = std::vector<std::string>;

std::optional<MatrixXd> read_matrix(const Json& j, const std::string& path, Problems& problems) {
  if (!j.is_array() || j.empty()) {
    problems.push_back(path + ": expected a non-empty array of rows");
    return std::nullopt;
  }
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].empty()) {
      problems.push_back(path + "[" + std::to_string(r) + "]: expected a non-empty array of numbers");
      return std::nullopt;
    }
    if (r == 0) cols = j[r].size();
    if (j[r].size() != cols) {
      problems.push_back(path + "[" + std::to_string(r) + "]: ragged row (" +
                         std::to_string(j[r].size()) + " entries, expected " +
                         std::to_string(cols) + ")");
      return std::nullopt;
    }
  }
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  bool ok = true;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Json& v = j[r][c];
      if (!v.is_number()) {
        problems.push_back(path + "[" + std::to_string(r) + "][" + std::to_string(c) +
                           "]: expected a number");
        ok = false;
        continue;
      }
      m(static_cast<Index>(r), static_cast<Index>(c)) = v.get<double>();
    }
  }
  if (!ok) return std::nullopt;
  return m;
}

std::vector<MatrixXd> read_heads(const Json& j, const std::string& path, Problems& problems) {
  std::vector<MatrixXd> out;
  if (!j.is_array()) {
    problems.push_back(path + ": expected an array with one matrix per head");
    return out;
  }
  for (std::size_t a = 0; a < j.size(); ++a)
    if (auto m = read_matrix(j[a], path + "[" + std::to_string(a) + "]", problems)) out.push_back(*m);
  return out;
}

const Json* field(const Json& obj, const char* key, const std::string& path, Problems& problems) {
  if (!obj.is_object() || !obj.contains(key)) {
    problems.push_back(path + (path.empty() ? "" : ".") + key + ": missing");
    return nullptr;
  }
  return &obj[key];
}

ModelConfig read_config(const Json& j, Problems& problems) {
  ModelConfig c;
  if (!j.is_object()) {
    problems.push_back("config: expected an object");
    return c;
  }
  const auto dim = [&](const char* key, int& dst) {
    const Json* v = field(j, key, "config", problems);
    if (!v) return;
    if (!v->is_number_integer()) {
      problems.push_back(std::string("config.") + key + ": expected an integer");
      return;
    }
    dst = v->get<int>();
  };
  dim("d_e", c.d_e);
  dim("n_h", c.n_h);
  dim("d_h", c.d_h);
  dim("n_t", c.n_t);
  dim("n_c", c.n_c);
  dim("d_f", c.d_f);
  const auto flag = [&](const char* key, bool& dst) {
    if (!j.contains(key)) return;  // optional, defaults to false
    if (!j[key].is_boolean()) {
      problems.push_back(std::string("config.") + key + ": expected a boolean");
      return;
    }
    dst = j[key].get<bool>();
  };
  flag("extended", c.extended);
  flag("attn_scale", c.attn_scale);
  if (j.contains("activation")) {
    if (!j["activation"].is_string()) {
      problems.push_back("config.activation: expected a string");
    } else {
      try {
        c.activation = activation_from_string(j["activation"].get<std::string>());
      } catch (const ParseError& e) {
        problems.push_back(std::string("config.activation: ") + e.what());
      }
    }
  }
  try {
    c.validate();
  } catch (const ShapeMismatch& e) {
    problems.push_back(std::string("config: ") + e.what());
  }
  return c;
}

void throw_if(Problems& problems) {
  if (!problems.empty()) throw SchemaError(std::move(problems));
}

}  // namespace

Json matrix_to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json config_to_json(const ModelConfig& c) {
  return Json{{"d_e", c.d_e},       {"n_h", c.n_h},           {"d_h", c.d_h},
              {"n_t", c.n_t},       {"n_c", c.n_c},           {"d_f", c.d_f},
              {"extended", c.extended}, {"attn_scale", c.attn_scale},
              {"activation", std::string(to_string(c.activation))}};
}

Json weights_to_json(const WeightSet<double>& w, const ModelConfig& c) {
  validate_weights(w, c);
  Json layers = Json::array();
  for (const auto& blk : w.blocks) {
    Json layer;
    for (const auto& [name, heads] : {std::pair{"Q", &blk.Q}, std::pair{"K", &blk.K}, std::pair{"V", &blk.V}}) {
      Json arr = Json::array();
      for (const auto& m : *heads) arr.push_back(matrix_to_json(m));
      layer[name] = std::move(arr);
    }
    layer["L"] = matrix_to_json(blk.L);
    layer["W"] = matrix_to_json(blk.W);
    layer["What"] = matrix_to_json(blk.W_hat);
    if (blk.G) layer["G"] = matrix_to_json(*blk.G);
    if (blk.G_bar) layer["Gbar"] = matrix_to_json(*blk.G_bar);
    layers.push_back(std::move(layer));
  }
  return Json{{"config", config_to_json(c)}, {"layers", std::move(layers)}, {"U", matrix_to_json(w.U)}};
}

ModelConfig config_from_json(const Json& doc) {
  Problems problems;
  ModelConfig c = read_config(doc, problems);
  throw_if(problems);
  return c;
}

WeightFile weights_from_json(const Json& doc, std::optional<bool> expect_extended) {
  Problems problems;
  if (!doc.is_object()) {
    problems.push_back("<root>: expected an object");
    throw_if(problems);
  }
  WeightFile out;
  if (const Json* c = field(doc, "config", "", problems)) out.config = read_config(*c, problems);
  if (problems.empty() && expect_extended && *expect_extended != out.config.extended)
    throw ModeMismatch(std::string("weight file is for ") +
                       (out.config.extended ? "extended" : "standard") + " mode, but " +
                       (*expect_extended ? "extended" : "standard") + " mode was requested");
  if (const Json* layers = field(doc, "layers", "", problems)) {
    if (!layers->is_array()) {
      problems.push_back("layers: expected an array");
    } else {
      for (std::size_t b = 0; b < layers->size(); ++b) {
        const Json& lj = (*layers)[b];
        const std::string base = "layers[" + std::to_string(b) + "]";
        BlockWeights<double> blk;
        if (const Json* v = field(lj, "Q", base, problems)) blk.Q = read_heads(*v, base + ".Q", problems);
        if (const Json* v = field(lj, "K", base, problems)) blk.K = read_heads(*v, base + ".K", problems);
        if (const Json* v = field(lj, "V", base, problems)) blk.V = read_heads(*v, base + ".V", problems);
        const auto mat = [&](const char* key, MatrixXd& dst) {
          if (const Json* v = field(lj, key, base, problems))
            if (auto m = read_matrix(*v, base + "." + key, problems)) dst = *m;
        };
        mat("L", blk.L);
        mat("W", blk.W);
        mat("What", blk.W_hat);
        for (const auto& [key, dst] : {std::pair{"G", &blk.G}, std::pair{"Gbar", &blk.G_bar}})
          if (lj.is_object() && lj.contains(key))
            if (auto m = read_matrix(lj[key], base + "." + key, problems)) *dst = *m;
        out.weights.blocks.push_back(std::move(blk));
      }
    }
  }
  if (const Json* u = field(doc, "U", "", problems))
    if (auto m = read_matrix(*u, "U", problems)) out.weights.U = *m;
  throw_if(problems);
  problems = weight_problems(out.weights, out.config);
  throw_if(problems);
  return out;
}

Json parse_json_text(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": JSON syntax error: " + e.what());
  }
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

WeightFile read_weight_file(const std::filesystem::path& path, std::optional<bool> expect_extended) {
  const std::string text = slurp(path);
  try {
    return weights_from_json(parse_json_text(text, path.string()), expect_extended);
  } catch (const SchemaError& e) {
    std::vector<std::string> p;
    for (const auto& s : e.problems()) p.push_back(path.string() + ": " + s);
    throw SchemaError(std::move(p));
  }
}

void write_weight_file(const std::filesystem::path& path, const WeightFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << dump_json(weights_to_json(file.weights, file.config)) << '\n';
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

Json gauge_to_json(const GaugeElement<double>& g) {
  const auto list = [](const std::vector<MatrixXd>& ms) {
    Json arr = Json::array();
    for (const auto& m : ms) arr.push_back(matrix_to_json(m));
    return arr;
  };
  const auto nested = [&](const std::vector<std::vector<MatrixXd>>& blocks) {
    Json arr = Json::array();
    for (const auto& heads : blocks) arr.push_back(list(heads));
    return arr;
  };
  return Json{{"g0", list(g.g0)}, {"g4", list(g.g4)}, {"h1", nested(g.h1)}, {"h3", nested(g.h3)}};
}

GaugeElement<double> gauge_from_json(const Json& doc) {
  Problems problems;
  GaugeElement<double> g;
  const auto list = [&](const char* key, std::vector<MatrixXd>& dst) {
    const Json* v = field(doc, key, "", problems);
    if (!v) return;
    if (!v->is_array()) {
      problems.push_back(std::string(key) + ": expected an array");
      return;
    }
    for (std::size_t i = 0; i < v->size(); ++i)
      if (auto m = read_matrix((*v)[i], std::string(key) + "[" + std::to_string(i) + "]", problems))
        dst.push_back(*m);
  };
  const auto nested = [&](const char* key, std::vector<std::vector<MatrixXd>>& dst) {
    const Json* v = field(doc, key, "", problems);
    if (!v) return;
    if (!v->is_array()) {
      problems.push_back(std::string(key) + ": expected an array");
      return;
    }
    for (std::size_t b = 0; b < v->size(); ++b)
      dst.push_back(read_heads((*v)[b], std::string(key) + "[" + std::to_string(b) + "]", problems));
  };
  list("g0", g.g0);
  if (doc.is_object() && doc.contains("g4")) list("g4", g.g4);
  nested("h1", g.h1);
  nested("h3", g.h3);
  throw_if(problems);
  return g;
}

std::string dump_json(const Json& doc, int indent) { return doc.dump(indent); }

}  // namespace tgauge
