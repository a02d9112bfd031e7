#include "tfa/text_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace tfa {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  if (ec != std::errc{}) throw std::runtime_error("format_double: buffer too small");
  return std::string(buf, ptr);
}

double parse_double(std::string_view token, const std::string& context) {
  // Trim surrounding whitespace (files may carry trailing '\r' or spaces).
  std::size_t b = 0, e = token.size();
  while (b < e && std::isspace(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(token[e - 1]))) --e;
  const std::string_view t = token.substr(b, e - b);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw io_error(context + ": non-numeric value '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path,
                      const std::vector<std::string>& header_lines) {
  std::ostringstream os;
  for (const auto& h : header_lines) os << h << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
  write_text_file(path, os.str());
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path,
                                std::vector<std::string>* header_lines) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index cols = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header_lines) header_lines->push_back(line);
      continue;
    }
    const auto fields = split_csv(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      row.push_back(parse_double(f, path.string() + " line " + std::to_string(lineno)));
    }
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
    } else if (cols != static_cast<Eigen::Index>(row.size())) {
      throw io_error(path.string() + " line " + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw io_error(path.string() + " line " + std::to_string(lineno == 0 ? 1 : lineno) +
                   ": no data rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw io_error("write failed for '" + path.string() + "'");
}

}  // namespace tfa
