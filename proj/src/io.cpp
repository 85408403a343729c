#include "csim/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csim/common.hpp"

namespace csim {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMatrixMagic[4] = {'C', 'S', 'I', 'M'};
constexpr char kModelMagic[4] = {'C', 'M', 'D', 'L'};
constexpr uint32_t kFormatVersion = 1;

void write_raw(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) {
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  write_raw(out, b, 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  write_raw(out, b, 8);
}

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<uint64_t>(v));
}

void read_raw(std::istream& in, void* data, std::size_t n,
              const std::string& what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError("truncated file while reading " + what);
  }
}

uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  read_raw(in, b, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(b[i]) << (8 * i);
  }
  return v;
}

uint64_t read_u64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  read_raw(in, b, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(b[i]) << (8 * i);
  }
  return v;
}

double read_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_u64(in, what));
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) {
    throw DataError("cannot open file for writing: " + path.string());
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  return in;
}

void check_magic(std::istream& in, const char (&magic)[4],
                 const std::filesystem::path& path) {
  char got[4];
  read_raw(in, got, 4, "magic of " + path.string());
  if (std::memcmp(got, magic, 4) != 0) {
    throw DataError("bad magic in " + path.string() + ": expected " +
                    std::string(magic, 4));
  }
}

void write_matrix_payload(std::ostream& out, const Eigen::MatrixXd& m,
                          const std::optional<std::vector<SequenceEntry>>& seq) {
  write_raw(out, kMatrixMagic, 4);
  write_u32(out, kFormatVersion);
  write_u64(out, static_cast<uint64_t>(m.rows()));
  write_u64(out, static_cast<uint64_t>(m.cols()));
  const unsigned char flag = seq ? 1 : 0;
  write_raw(out, &flag, 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      write_f64(out, m(i, j));
    }
  }
  if (seq) {
    for (const auto& e : *seq) {
      write_u32(out, e.video_id);
      write_u32(out, e.frame_index);
    }
  }
}

std::pair<Eigen::MatrixXd, std::optional<std::vector<SequenceEntry>>>
read_matrix_payload(std::istream& in, const std::filesystem::path& path) {
  check_magic(in, kMatrixMagic, path);
  const uint32_t version = read_u32(in, "version of " + path.string());
  if (version != kFormatVersion) {
    throw DataError("unsupported version " + std::to_string(version) + " in " +
                    path.string());
  }
  const uint64_t rows = read_u64(in, "row count of " + path.string());
  const uint64_t cols = read_u64(in, "column count of " + path.string());
  if (rows == 0 || cols == 0 || rows > (1ull << 32) || cols > (1ull << 32)) {
    throw DataError("implausible matrix shape in " + path.string());
  }
  unsigned char flag = 0;
  read_raw(in, &flag, 1, "sequence flag of " + path.string());
  if (flag > 1) {
    throw DataError("invalid sequence flag in " + path.string());
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = read_f64(in, "payload of " + path.string());
    }
  }
  std::optional<std::vector<SequenceEntry>> seq;
  if (flag == 1) {
    std::vector<SequenceEntry> entries(rows);
    for (auto& e : entries) {
      e.video_id = read_u32(in, "sequence table of " + path.string());
      e.frame_index = read_u32(in, "sequence table of " + path.string());
    }
    seq = std::move(entries);
  }
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw DataError("trailing bytes in " + path.string());
  }
  return {std::move(m), std::move(seq)};
}

double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw DataError("cannot parse number '" + field + "' in " + where);
  }
  return v;
}

uint32_t parse_u32(const std::string& field, const std::string& where) {
  uint32_t v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw DataError("cannot parse integer '" + field + "' in " + where);
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

ExemplarSet load_descriptors_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw DataError("no rows in " + path.string());
  }
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "video_id" ||
      header[2] != "frame_index") {
    throw DataError("bad descriptor CSV header in " + path.string());
  }
  const std::size_t dim = header.size() - 3;
  for (std::size_t d = 0; d < dim; ++d) {
    if (header[d + 3] != "f" + std::to_string(d)) {
      throw DataError("bad descriptor CSV header in " + path.string() +
                      ": column " + std::to_string(d + 3) + " is '" +
                      header[d + 3] + "'");
    }
  }

  ExemplarSet set;
  std::vector<std::vector<double>> rows;
  std::vector<SequenceEntry> seq;
  bool any_seq = false;
  bool any_unseq = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const std::string where = path.string() + " line " + std::to_string(line_no);
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("wrong field count in " + where + ": got " +
                      std::to_string(fields.size()) + ", expected " +
                      std::to_string(header.size()));
    }
    set.ids.push_back(fields[0]);
    const bool has_video = !fields[1].empty();
    const bool has_frame = !fields[2].empty();
    if (has_video != has_frame) {
      throw DataError("video_id and frame_index must be both set or both "
                      "empty in " + where);
    }
    if (has_video) {
      any_seq = true;
      seq.push_back({parse_u32(fields[1], where), parse_u32(fields[2], where)});
    } else {
      any_unseq = true;
      seq.push_back({});
    }
    std::vector<double> row(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      row[d] = parse_double(fields[d + 3], where + " column f" +
                            std::to_string(d));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw DataError("no rows in " + path.string());
  }
  if (any_seq && any_unseq) {
    throw DataError("sequence columns must cover all rows or none in " +
                    path.string());
  }

  set.descriptors.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      set.descriptors(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(d)) = rows[i][d];
    }
  }
  if (any_seq) {
    set.sequence = std::move(seq);
  }
  set.validate();
  return set;
}

void save_descriptors_csv(const std::filesystem::path& path,
                          const ExemplarSet& set) {
  set.validate();
  for (const auto& id : set.ids) {
    if (id.find(',') != std::string::npos ||
        id.find('\n') != std::string::npos) {
      throw std::invalid_argument("id '" + id + "' cannot be stored in CSV");
    }
  }
  std::ofstream out = open_out(path, false);
  out << "id,video_id,frame_index";
  for (Eigen::Index d = 0; d < set.dim(); ++d) {
    out << ",f" << d;
  }
  out << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    out << set.ids[static_cast<std::size_t>(i)] << ",";
    if (set.sequence) {
      const auto& e = (*set.sequence)[static_cast<std::size_t>(i)];
      out << e.video_id << "," << e.frame_index;
    } else {
      out << ",";
    }
    for (Eigen::Index d = 0; d < set.dim(); ++d) {
      out << "," << set.descriptors(i, d);
    }
    out << "\n";
  }
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

ExemplarSet load_descriptors_binary(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  auto [m, seq] = read_matrix_payload(in, path);
  ExemplarSet set;
  set.descriptors = std::move(m);
  set.sequence = std::move(seq);
  set.ids.reserve(static_cast<std::size_t>(set.descriptors.rows()));
  for (Eigen::Index i = 0; i < set.descriptors.rows(); ++i) {
    set.ids.push_back(std::to_string(i));
  }
  set.validate();
  return set;
}

void save_descriptors_binary(const std::filesystem::path& path,
                             const ExemplarSet& set) {
  set.validate();
  std::ofstream out = open_out(path, true);
  write_matrix_payload(out, set.descriptors, set.sequence);
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

ExemplarSet load_descriptors(const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    return load_descriptors_csv(path);
  }
  return load_descriptors_binary(path);
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  auto [m, seq] = read_matrix_payload(in, path);
  if (seq) {
    throw DataError("unexpected sequence table in matrix file " +
                    path.string());
  }
  return std::move(m);
}

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out = open_out(path, true);
  write_matrix_payload(out, m, std::nullopt);
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("queries") ||
      !doc["queries"].is_array()) {
    throw DataError("ground truth file " + path.string() +
                    " must contain a 'queries' array");
  }
  GroundTruth gt;
  for (const auto& q : doc["queries"]) {
    QueryLabels labels;
    labels.query = q.at("query").get<std::string>();
    for (const auto& p : q.at("positives")) {
      labels.positives.push_back(p.get<std::string>());
    }
    for (const auto& n : q.at("negatives")) {
      labels.negatives.push_back(n.get<std::string>());
    }
    gt.queries.push_back(std::move(labels));
  }
  gt.validate();
  return gt;
}

void save_ground_truth(const std::filesystem::path& path,
                       const GroundTruth& gt) {
  gt.validate();
  ordered_json doc;
  doc["queries"] = ordered_json::array();
  for (const auto& q : gt.queries) {
    ordered_json entry;
    entry["query"] = q.query;
    entry["positives"] = q.positives;
    entry["negatives"] = q.negatives;
    doc["queries"].push_back(std::move(entry));
  }
  std::ofstream out = open_out(path, false);
  out << doc.dump(2) << "\n";
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

CliqueAssignment load_cliques_csv(const std::filesystem::path& path,
                                  int n_samples) {
  std::ifstream in = open_in(path, false);
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("no rows in " + path.string());
  }
  if (split_csv_line(line) != std::vector<std::string>{"clique_id",
                                                       "sample_id"}) {
    throw DataError("bad clique CSV header in " + path.string());
  }
  CliqueAssignment cl;
  cl.n_samples = n_samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const std::string where = path.string() + " line " + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      throw DataError("wrong field count in " + where);
    }
    const auto clique = static_cast<int>(parse_u32(fields[0], where));
    const auto sample = static_cast<int>(parse_u32(fields[1], where));
    if (clique > static_cast<int>(cl.members.size())) {
      throw DataError("clique ids must be contiguous in " + where);
    }
    if (clique == static_cast<int>(cl.members.size())) {
      cl.members.emplace_back();
    }
    cl.members[static_cast<std::size_t>(clique)].push_back(sample);
  }
  cl.validate();
  return cl;
}

void save_cliques_csv(const std::filesystem::path& path,
                      const CliqueAssignment& cl) {
  cl.validate();
  std::ofstream out = open_out(path, false);
  out << "clique_id,sample_id\n";
  for (std::size_t k = 0; k < cl.members.size(); ++k) {
    for (int i : cl.members[k]) {
      out << k << "," << i << "\n";
    }
  }
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  check_magic(in, kModelMagic, path);
  const uint32_t version = read_u32(in, "version of " + path.string());
  if (version != kFormatVersion) {
    throw DataError("unsupported model version in " + path.string());
  }
  EmbeddingModel m;
  m.input_dim = static_cast<int>(read_u32(in, "input_dim"));
  m.hidden_dim = static_cast<int>(read_u32(in, "hidden_dim"));
  m.embed_dim = static_cast<int>(read_u32(in, "embed_dim"));
  m.class_count = static_cast<int>(read_u32(in, "class_count"));
  const auto read_block = [&](Eigen::MatrixXd& w, int rows, int cols,
                              const std::string& name) {
    w.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        w(i, j) = read_f64(in, name + " of " + path.string());
      }
    }
  };
  Eigen::MatrixXd b;
  read_block(m.w1, m.hidden_dim, m.input_dim, "w1");
  read_block(b, m.hidden_dim, 1, "b1");
  m.b1 = b.col(0);
  read_block(m.w2, m.embed_dim, m.hidden_dim, "w2");
  read_block(b, m.embed_dim, 1, "b2");
  m.b2 = b.col(0);
  read_block(m.w3, m.class_count, m.embed_dim, "w3");
  read_block(b, m.class_count, 1, "b3");
  m.b3 = b.col(0);
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw DataError("trailing bytes in " + path.string());
  }
  m.validate();
  return m;
}

void save_model(const std::filesystem::path& path, const EmbeddingModel& m) {
  m.validate();
  std::ofstream out = open_out(path, true);
  write_raw(out, kModelMagic, 4);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<uint32_t>(m.input_dim));
  write_u32(out, static_cast<uint32_t>(m.hidden_dim));
  write_u32(out, static_cast<uint32_t>(m.embed_dim));
  write_u32(out, static_cast<uint32_t>(m.class_count));
  const auto write_block = [&](const Eigen::MatrixXd& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        write_f64(out, w(i, j));
      }
    }
  };
  write_block(m.w1);
  write_block(m.b1);
  write_block(m.w2);
  write_block(m.b2);
  write_block(m.w3);
  write_block(m.b3);
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

SolveReport load_solve_report(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  SolveReport report;
  try {
    report.objective_trace = doc.at("objective_trace").get<std::vector<double>>();
    report.inner_iterations = doc.at("inner_iterations").get<std::vector<int>>();
    report.final_objective = doc.at("final_objective").get<double>();
    report.rounding_gap = doc.at("rounding_gap").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed solve report " + path.string() + ": " +
                    e.what());
  }
  return report;
}

void save_solve_report(const std::filesystem::path& path,
                       const SolveReport& report) {
  ordered_json doc;
  doc["objective_trace"] = report.objective_trace;
  doc["inner_iterations"] = report.inner_iterations;
  doc["final_objective"] = report.final_objective;
  doc["rounding_gap"] = report.rounding_gap;
  std::ofstream out = open_out(path, false);
  out << doc.dump(2) << "\n";
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

TrainReport load_train_report(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"iteration", "loss"}) {
    throw DataError("bad train report header in " + path.string());
  }
  TrainReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const std::string where = path.string() + " line " + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      throw DataError("wrong field count in " + where);
    }
    const auto it = parse_u32(fields[0], where);
    if (it != report.loss_curve.size()) {
      throw DataError("iterations must be contiguous in " + where);
    }
    report.loss_curve.push_back(parse_double(fields[1], where));
  }
  return report;
}

void save_train_report(const std::filesystem::path& path,
                       const TrainReport& report) {
  std::ofstream out = open_out(path, false);
  out << "iteration,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < report.loss_curve.size(); ++i) {
    out << i << "," << report.loss_curve[i] << "\n";
  }
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

}  // namespace csim
