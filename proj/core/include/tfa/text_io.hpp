#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfa {

/// File/parse failures that map to the CLI's "data error" exit code.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical blow-up detected during optimization ("divergence" exit code).
struct divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Formats a double with 17 significant digits, locale independent.
/// Round-trips exactly through parse_double.
std::string format_double(double value);

/// Locale-independent double parser; the whole token must be consumed.
/// Throws io_error with `context` in the message on failure.
double parse_double(std::string_view token, const std::string& context);

/// Splits one CSV line on ',' (no quoting; our files never need it).
std::vector<std::string> split_csv(const std::string& line);

/// Writes a matrix as CSV, one row per line, '.' decimal separator.
/// `header_lines` are emitted first, verbatim (include the leading '#').
void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path,
                      const std::vector<std::string>& header_lines = {});

/// Reads a CSV written by write_matrix_csv. Leading '#' lines are returned
/// through `header_lines` when non-null. Throws io_error on ragged rows,
/// non-numeric fields, or an empty file (errors name the offending line).
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path,
                                std::vector<std::string>* header_lines = nullptr);

/// Reads a whole text file; throws io_error when the file cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Writes a string to a file, overwriting; throws io_error on failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace tfa
