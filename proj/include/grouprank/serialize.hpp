#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace grouprank {

class SerializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest round-trip-exact decimal form of a double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// All model files share one plain-text layout:
//   grouprank-model v1
//   type <tag>
//   <key> <value>            scalar and string entries
//   <key> <count>            block entries, one value per line after the key
//   ...
// Entries appear in a fixed order per model type; the reader walks them
// sequentially so that a missing or misplaced key fails loudly.
// ---------------------------------------------------------------------------

class ModelWriter {
 public:
  explicit ModelWriter(const std::string& type) {
    out_ << "grouprank-model v1\n";
    out_ << "type " << type << "\n";
  }

  void comment(const std::string& line) { out_ << "# " << line << "\n"; }

  void scalar(const std::string& key, double v) {
    out_ << key << " " << format_double(v) << "\n";
  }

  void scalar_int(const std::string& key, long long v) {
    out_ << key << " " << v << "\n";
  }

  void text(const std::string& key, const std::string& v) {
    out_ << key << " " << v << "\n";
  }

  void block(const std::string& key, const std::vector<double>& values) {
    out_ << key << " " << values.size() << "\n";
    for (double v : values) out_ << format_double(v) << "\n";
  }

  std::string str() const { return out_.str(); }

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
      throw SerializationError("cannot open for writing: " + path.string());
    }
    f << out_.str();
  }

 private:
  std::ostringstream out_;
};

class ModelReader {
 public:
  ModelReader(std::string content, const std::string& expect_type)
      : content_(std::move(content)) {
    if (next_line() != "grouprank-model v1") {
      throw SerializationError("bad model file header");
    }
    const std::string type_line = next_line();
    if (type_line != "type " + expect_type) {
      throw SerializationError("model type mismatch: wanted '" + expect_type +
                               "', file says '" + type_line + "'");
    }
  }

  static ModelReader from_file(const std::filesystem::path& path,
                               const std::string& expect_type) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
      throw SerializationError("cannot open model file: " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ModelReader(ss.str(), expect_type);
  }

  double scalar(const std::string& key) {
    return parse_double(value_for(key), key);
  }

  long long scalar_int(const std::string& key) {
    try {
      return std::stoll(value_for(key));
    } catch (const std::exception&) {
      throw SerializationError("bad integer for key '" + key + "'");
    }
  }

  std::string text(const std::string& key) { return value_for(key); }

  std::vector<double> block(const std::string& key) {
    const std::string count_str = value_for(key);
    std::size_t n = 0;
    try {
      n = static_cast<std::size_t>(std::stoull(count_str));
    } catch (const std::exception&) {
      throw SerializationError("bad block count for key '" + key + "'");
    }
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(parse_double(next_content_line(), key));
    }
    return out;
  }

 private:
  std::string next_line() {
    if (pos_ >= content_.size()) {
      throw SerializationError("unexpected end of model file");
    }
    const std::size_t nl = content_.find('\n', pos_);
    std::string line = nl == std::string::npos
                           ? content_.substr(pos_)
                           : content_.substr(pos_, nl - pos_);
    pos_ = nl == std::string::npos ? content_.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  std::string next_content_line() {
    std::string line = next_line();
    while (line.empty() || line[0] == '#') line = next_line();
    return line;
  }

  std::string value_for(const std::string& key) {
    const std::string line = next_content_line();
    if (line.size() < key.size() + 2 || line.compare(0, key.size(), key) != 0 ||
        line[key.size()] != ' ') {
      throw SerializationError("expected key '" + key + "', got line '" +
                               line + "'");
    }
    return line.substr(key.size() + 1);
  }

  static double parse_double(const std::string& s, const std::string& key) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == 0) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw SerializationError("bad number '" + s + "' under key '" + key +
                               "'");
    }
  }

  std::string content_;
  std::size_t pos_ = 0;
};

}  // namespace grouprank
