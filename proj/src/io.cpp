#include "spheremap/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace spheremap::io {

namespace {

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw InvalidInputError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw InvalidInputError("cannot open for reading: " + path);
  return in;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

long long parse_ll(const std::string& s, const std::string& context) {
  long long v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InvalidInputError(context + ": cannot parse integer '" + s + "'");
  return v;
}

std::uint64_t to_le64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

Matrix read_matrix_text(std::istream& in, const std::string& path) {
  std::string header;
  if (!std::getline(in, header)) throw InvalidInputError(path + ": empty file");
  if (header.empty() || header[0] != '#')
    throw InvalidInputError(path + ": missing '#rows\\tcols' header");
  const auto fields = split_tabs(header.substr(1));
  if (fields.size() != 2) throw InvalidInputError(path + ": malformed header");
  const long long rows = parse_ll(fields[0], path);
  const long long cols = parse_ll(fields[1], path);
  if (rows < 0 || cols < 0) throw InvalidInputError(path + ": negative shape");

  Matrix m(rows, cols);
  std::string line;
  for (long long i = 0; i < rows; ++i) {
    if (!std::getline(in, line))
      throw InvalidInputError(path + ": expected " + std::to_string(rows) + " rows, found " +
                              std::to_string(i));
    const auto values = split_tabs(line);
    if (static_cast<long long>(values.size()) != cols)
      throw InvalidInputError(path + ": line " + std::to_string(i + 2) + " has " +
                              std::to_string(values.size()) + " fields, expected " +
                              std::to_string(cols));
    for (long long j = 0; j < cols; ++j)
      m(i, j) = parse_double(values[static_cast<std::size_t>(j)],
                             path + ": line " + std::to_string(i + 2));
  }
  if (!m.allFinite()) throw InvalidInputError(path + ": non-finite entries");
  return m;
}

Matrix read_matrix_binary_stream(std::istream& in, const std::string& path) {
  std::uint64_t shape[2];
  in.read(reinterpret_cast<char*>(shape), sizeof(shape));
  if (!in) throw InvalidInputError(path + ": truncated binary header");
  const auto rows = static_cast<Index>(to_le64(shape[0]));
  const auto cols = static_cast<Index>(to_le64(shape[1]));
  if (rows < 0 || cols < 0 || rows * cols > (Index{1} << 32))
    throw InvalidInputError(path + ": implausible binary shape");
  Matrix m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(sizeof(double) * row.size()));
    if (!in) throw InvalidInputError(path + ": truncated binary body");
    if constexpr (std::endian::native == std::endian::big) {
      for (double& v : row) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        bits = __builtin_bswap64(bits);
        std::memcpy(&v, &bits, 8);
      }
    }
    for (Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  if (!m.allFinite()) throw InvalidInputError(path + ": non-finite entries");
  return m;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InvalidInputError(context + ": cannot parse number '" + s + "'");
  return v;
}

void write_matrix(const std::string& path, const Matrix& m) {
  auto out = open_out(path);
  out << '#' << m.rows() << '\t' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw InvalidInputError("write failed: " + path);
}

void write_matrix_binary(const std::string& path, const Matrix& m) {
  auto out = open_out(path, true);
  const std::uint64_t shape[2] = {to_le64(static_cast<std::uint64_t>(m.rows())),
                                  to_le64(static_cast<std::uint64_t>(m.cols()))};
  out.write(reinterpret_cast<const char*>(shape), sizeof(shape));
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    if constexpr (std::endian::native == std::endian::big) {
      for (double& v : row) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        bits = __builtin_bswap64(bits);
        std::memcpy(&v, &bits, 8);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(double) * row.size()));
  }
  if (!out) throw InvalidInputError("write failed: " + path);
}

Matrix read_matrix(const std::string& path) {
  auto in = open_in(path, true);
  const int first = in.peek();
  if (first == '#') {
    auto text = open_in(path);
    return read_matrix_text(text, path);
  }
  return read_matrix_binary_stream(in, path);
}

void write_groups(const std::string& path, const GroupPartition& partition) {
  auto out = open_out(path);
  for (Index k = 0; k < partition.groups(); ++k)
    for (Index i = partition.start(k); i < partition.start(k) + partition.size(k); ++i)
      out << i << '\t' << k << '\n';
  if (!out) throw InvalidInputError("write failed: " + path);
}

GroupPartition read_groups(const std::string& path) {
  auto in = open_in(path);
  std::vector<long long> ids;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2)
      throw InvalidInputError(path + ": line " + std::to_string(line_no) +
                              " must be 'row_id\\tgroup_id'");
    const long long row = parse_ll(fields[0], path);
    if (row != static_cast<long long>(ids.size()))
      throw InvalidInputError(path + ": line " + std::to_string(line_no) + " has row_id " +
                              std::to_string(row) + ", expected " +
                              std::to_string(ids.size()) + " (rows must be in order)");
    ids.push_back(parse_ll(fields[1], path));
  }
  return GroupPartition::from_group_ids(ids);
}

void write_mapping(const std::string& path, const BlockMappingMatrix& pi) {
  auto out = open_out(path);
  out << "#mapping\t" << pi.rows() << '\n';
  const GroupPartition& part = pi.partition();
  for (Index i = 0; i < pi.rows(); ++i) {
    const MappingRow& r = pi.row(i);
    switch (r.kind) {
      case RowKind::Identity:
      case RowKind::Permuted:
        out << i << '\t' << r.target << "\t1\n";
        break;
      case RowKind::Weighted: {
        const Index k = part.group_of(i);
        for (Index j = 0; j < r.weights.size(); ++j) {
          if (r.weights(j) == 0.0) continue;
          out << i << '\t' << part.start(k) + j << '\t' << format_double(r.weights(j)) << '\n';
        }
        break;
      }
      case RowKind::Unmapped:
        break;
    }
  }
  if (!out) throw InvalidInputError("write failed: " + path);
}

BlockMappingMatrix read_mapping(const std::string& path, const GroupPartition& partition) {
  auto in = open_in(path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("#mapping\t", 0) != 0)
    throw InvalidInputError(path + ": missing '#mapping\\tn' header");
  const long long n = parse_ll(header.substr(9), path);
  if (n != partition.rows())
    throw InvalidInputError(path + ": mapping is for " + std::to_string(n) +
                            " rows, groups file for " + std::to_string(partition.rows()));

  std::map<Index, std::vector<std::pair<Index, double>>> entries;
  std::string line;
  long long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw InvalidInputError(path + ": line " + std::to_string(line_no) +
                              " must be 'i\\tj\\tvalue'");
    const auto i = static_cast<Index>(parse_ll(fields[0], path));
    const auto j = static_cast<Index>(parse_ll(fields[1], path));
    const double v = parse_double(fields[2], path + ": line " + std::to_string(line_no));
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw InvalidInputError(path + ": line " + std::to_string(line_no) +
                              " index out of range");
    if (partition.group_of(i) != partition.group_of(j))
      throw InvalidInputError(path + ": line " + std::to_string(line_no) +
                              " entry leaves the row's group block");
    entries[i].emplace_back(j, v);
  }

  BlockMappingMatrix pi(partition);
  for (Index i = 0; i < partition.rows(); ++i) {
    auto it = entries.find(i);
    if (it == entries.end()) {
      pi.set_unmapped(i);
      continue;
    }
    const auto& row = it->second;
    if (row.size() == 1 && row.front().second == 1.0) {
      pi.set_permuted(i, row.front().first);
      continue;
    }
    const Index k = partition.group_of(i);
    Vector weights = Vector::Zero(partition.size(k));
    for (const auto& [j, v] : row) weights(j - partition.start(k)) = v;
    pi.set_weighted(i, std::move(weights));
  }
  return pi;
}

namespace {

void append_metric_columns(std::ostream& out, const MetricSet& m, const sim::MtMetrics& mt) {
  out << '\t' << format_double(m.w1_mse) << '\t' << format_double(m.w1_mse_per_p) << '\t'
      << format_double(m.w2_mse) << '\t' << format_double(m.w2_mse_per_p) << '\t'
      << format_double(m.match_rate) << '\t' << format_double(m.one_to_many_weight_mse) << '\t'
      << format_double(m.detection_rate) << '\t' << format_double(mt.w_mse) << '\t'
      << format_double(mt.w_refit_mse) << '\t' << format_double(mt.match_rate) << '\t'
      << format_double(mt.one_to_many_weight_mse) << '\t' << format_double(mt.detection_rate);
}

nlohmann::json metric_json(const MetricSet& m) {
  return {{"w1_mse", m.w1_mse},
          {"w1_mse_per_p", m.w1_mse_per_p},
          {"w2_mse", m.w2_mse},
          {"w2_mse_per_p", m.w2_mse_per_p},
          {"match_rate", m.match_rate},
          {"one_to_many_weight_mse", m.one_to_many_weight_mse},
          {"detection_rate", m.detection_rate}};
}

nlohmann::json mt_metric_json(const sim::MtMetrics& m) {
  return {{"w_mse", m.w_mse},
          {"w_refit_mse", m.w_refit_mse},
          {"match_rate", m.match_rate},
          {"one_to_many_weight_mse", m.one_to_many_weight_mse},
          {"detection_rate", m.detection_rate}};
}

}  // namespace

void write_sweep_tsv(const std::string& path, const sim::SweepTable& table) {
  auto out = open_out(path);
  out << sim::to_string(table.param)
      << "\tn\tp\tkappa\tK\talpha\treplicates_ok"
         "\tw1_mse\tw1_mse_per_p\tw2_mse\tw2_mse_per_p\tmatch_rate\tone_to_many_weight_mse"
         "\tdetection_rate\tmt_w_mse\tmt_w_refit_mse\tmt_match_rate\tmt_one_to_many_weight_mse"
         "\tmt_detection_rate\n";
  for (const auto& cell : table.cells) {
    out << format_double(cell.value) << '\t' << cell.config.n << '\t' << cell.config.p << '\t'
        << format_double(cell.config.kappa) << '\t' << cell.config.groups << '\t'
        << format_double(cell.config.alpha) << '\t' << cell.replicates_ok;
    append_metric_columns(out, cell.isphere, cell.mt);
    out << '\n';
  }
  if (!out) throw InvalidInputError("write failed: " + path);
}

void write_sweep_json(const std::string& path, const sim::SweepTable& table) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : table.cells) {
    cells.push_back({{"value", cell.value},
                     {"n", cell.config.n},
                     {"p", cell.config.p},
                     {"kappa", cell.config.kappa},
                     {"K", cell.config.groups},
                     {"alpha", cell.config.alpha},
                     {"replicates_ok", cell.replicates_ok},
                     {"isphere", metric_json(cell.isphere)},
                     {"mt", mt_metric_json(cell.mt)},
                     {"failures", cell.failures}});
  }
  nlohmann::json doc = {{"format_version", 1},
                        {"axis", sim::to_string(table.param)},
                        {"replicates", table.replicates},
                        {"cells", cells}};
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw InvalidInputError("write failed: " + path);
}

embedding::CooccurrenceTable read_cooccurrence(const std::string& path,
                                               const std::string& vocab_path) {
  std::vector<std::string> vocab;
  std::map<std::string, Index> index_of;
  const bool fixed_vocab = !vocab_path.empty();
  if (fixed_vocab) {
    auto vin = open_in(vocab_path);
    std::string line;
    while (std::getline(vin, line)) {
      if (line.empty()) continue;
      if (index_of.count(line))
        throw InvalidInputError(vocab_path + ": duplicate item '" + line + "'");
      index_of[line] = static_cast<Index>(vocab.size());
      vocab.push_back(line);
    }
    if (vocab.empty()) throw InvalidInputError(vocab_path + ": empty vocabulary");
  }

  auto in = open_in(path);
  std::vector<std::tuple<std::string, std::string, double>> raw;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw InvalidInputError(path + ": line " + std::to_string(line_no) +
                              " must be 'item_i\\titem_j\\tcount'");
    const long long count = parse_ll(fields[2], path + ": line " + std::to_string(line_no));
    if (count < 0)
      throw InvalidInputError(path + ": line " + std::to_string(line_no) + " negative count");
    for (int f = 0; f < 2; ++f) {
      const std::string& id = fields[static_cast<std::size_t>(f)];
      if (!index_of.count(id)) {
        if (fixed_vocab)
          throw InvalidInputError(path + ": line " + std::to_string(line_no) + " item '" + id +
                                  "' not in the vocabulary manifest");
        index_of[id] = static_cast<Index>(vocab.size());
        vocab.push_back(id);
      }
    }
    raw.emplace_back(fields[0], fields[1], static_cast<double>(count));
  }
  if (vocab.empty()) throw InvalidInputError(path + ": no triplets");

  std::vector<embedding::Triplet> triplets;
  triplets.reserve(raw.size());
  for (const auto& [a, b, c] : raw) triplets.push_back({index_of[a], index_of[b], c});
  return embedding::CooccurrenceTable::from_triplets(std::move(vocab), triplets);
}

}  // namespace spheremap::io
