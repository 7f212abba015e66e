#include "ppsvm/store.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

namespace fs = std::filesystem;

namespace ppsvm {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void check_id(const std::string& id) {
  for (char c : id)
    if (c == ',' || c == '\n' || c == '\r')
      throw Error("id not storable in CSV: " + id);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << content;
  if (!out) throw IoError("short write to " + p.string());
}

nlohmann::json parse_json_file(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

double parse_value(const std::string& field, const fs::path& file, size_t line) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0')
    throw ParseError(file.string() + ":" + std::to_string(line) +
                     ": bad numeric field '" + field + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Shared CSV writer. Protected rows carry a key_id column, plain rows don't.
template <typename T>
void save_store(const std::vector<T>& ts, const fs::path& dir, bool is_protected) {
  std::size_t dim = ts.empty() ? 0 : ts.front().values.size();
  std::set<std::string> key_ids;

  std::ostringstream csv;
  csv << "client_id,sample_id,";
  if (is_protected) csv << "key_id,";
  csv << "d";
  for (std::size_t i = 0; i < dim; ++i) csv << ",v" << i;
  csv << "\n";

  for (const auto& t : ts) {
    check_id(t.client_id);
    check_id(t.sample_id);
    if (t.values.size() != dim)
      throw DimensionMismatch("store requires uniform template dimension");
    csv << t.client_id << ',' << t.sample_id << ',';
    if constexpr (std::is_same_v<T, ProtectedTemplate>) {
      check_id(t.key_id);
      key_ids.insert(t.key_id);
      csv << t.key_id << ',';
    }
    csv << dim;
    for (double v : t.values) csv << ',' << format_double(v);
    csv << "\n";
  }

  nlohmann::json manifest{{"schema_version", 1},
                          {"dim", dim},
                          {"count", ts.size()},
                          {"protected", is_protected},
                          {"key_ids", key_ids}};

  fs::create_directories(dir);
  write_file(dir / "templates.csv", csv.str());
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

template <typename T>
std::vector<T> load_store(const fs::path& dir, bool want_protected) {
  const auto manifest = parse_json_file(dir / "manifest.json");
  if (manifest.value("schema_version", 0) != 1)
    throw SchemaVersionMismatch("unsupported template store schema_version");
  if (manifest.at("protected").get<bool>() != want_protected)
    throw ManifestMismatch(want_protected
                               ? "store holds plain templates, expected protected"
                               : "store holds protected templates, expected plain");
  const std::size_t dim = manifest.at("dim").get<std::size_t>();
  const std::size_t count = manifest.at("count").get<std::size_t>();

  const fs::path csv_path = dir / "templates.csv";
  const std::string content = read_file(csv_path);

  std::vector<T> out;
  std::size_t line_no = 0;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) continue;  // header
    if (line.empty()) continue;
    auto fields = split_csv(line);
    const std::size_t meta = want_protected ? 4 : 3;
    if (fields.size() != meta + dim)
      throw ParseError(csv_path.string() + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(meta + dim) + " fields, got " +
                       std::to_string(fields.size()));
    T t;
    t.client_id = fields[0];
    t.sample_id = fields[1];
    std::size_t base = 2;
    if constexpr (std::is_same_v<T, ProtectedTemplate>) {
      t.key_id = fields[2];
      base = 3;
    }
    const double d = parse_value(fields[base], csv_path, line_no);
    if (d != static_cast<double>(dim))
      throw ManifestMismatch("row dimension disagrees with manifest at line " +
                             std::to_string(line_no));
    t.values.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i)
      t.values.push_back(parse_value(fields[base + 1 + i], csv_path, line_no));
    out.push_back(std::move(t));
  }
  if (out.size() != count)
    throw ManifestMismatch("manifest count " + std::to_string(count) +
                           " != row count " + std::to_string(out.size()));
  return out;
}

}  // namespace

void save_templates(const std::vector<Template>& ts, const fs::path& dir) {
  save_store(ts, dir, false);
}

std::vector<Template> load_templates(const fs::path& dir) {
  return load_store<Template>(dir, false);
}

void save_protected(const std::vector<ProtectedTemplate>& ts, const fs::path& dir) {
  save_store(ts, dir, true);
}

std::vector<ProtectedTemplate> load_protected(const fs::path& dir) {
  return load_store<ProtectedTemplate>(dir, true);
}

void save_keyring(const KeyCondition& kc, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_file(file, nlohmann::json(kc).dump(2) + "\n");
}

KeyCondition load_keyring(const fs::path& file) {
  return parse_json_file(file).get<KeyCondition>();
}

void save_model(const SvmModel& m, const fs::path& file) {
  nlohmann::json support = nlohmann::json::array();
  for (std::size_t k = 0; k < m.support_vectors.size(); ++k)
    support.push_back(nlohmann::json{{"alpha", m.alphas[k]},
                                     {"label", m.labels[k]},
                                     {"vector", m.support_vectors[k]}});
  nlohmann::json j{{"schema_version", 1},
                   {"kernel", m.kernel},
                   {"C", m.c_param},
                   {"bias", m.bias},
                   {"support", support},
                   {"trained_on_key", m.trained_on_key}};
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_file(file, j.dump(2) + "\n");
}

SvmModel load_model(const fs::path& file) {
  const auto j = parse_json_file(file);
  if (j.value("schema_version", 0) != 1)
    throw SchemaVersionMismatch("unsupported model schema_version");
  SvmModel m;
  m.kernel = j.at("kernel").get<KernelSpec>();
  m.c_param = j.at("C").get<double>();
  m.bias = j.at("bias").get<double>();
  m.trained_on_key = j.value("trained_on_key", std::string());
  for (const auto& sv : j.at("support")) {
    m.alphas.push_back(sv.at("alpha").get<double>());
    m.labels.push_back(sv.at("label").get<int>());
    m.support_vectors.push_back(sv.at("vector").get<std::vector<double>>());
  }
  return m;
}

void save_report(const EvalReport& r, const fs::path& json_file,
                 const fs::path& csv_file) {
  if (json_file.has_parent_path()) fs::create_directories(json_file.parent_path());
  write_file(json_file, nlohmann::json(r).dump(2) + "\n");

  std::ostringstream csv;
  csv << "tau,far,frr\n";
  char tau_buf[40];
  for (const auto& p : r.curve) {
    if (std::isinf(p.threshold))
      std::snprintf(tau_buf, sizeof tau_buf, "%s", p.threshold > 0 ? "inf" : "-inf");
    else
      std::snprintf(tau_buf, sizeof tau_buf, "%.6g", p.threshold);
    csv << tau_buf << ',' << format_double(p.far) << ',' << format_double(p.frr)
        << "\n";
  }
  if (csv_file.has_parent_path()) fs::create_directories(csv_file.parent_path());
  write_file(csv_file, csv.str());
}

EvalReport load_report(const fs::path& json_file) {
  return parse_json_file(json_file).get<EvalReport>();
}

}  // namespace ppsvm
