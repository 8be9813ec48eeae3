#ifndef FEATURESCOPE_MATRIX_IO_HPP
#define FEATURESCOPE_MATRIX_IO_HPP

#include "featurescope/common.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace featurescope {

// On-disk matrix layout: 16-byte header followed by rows*cols little-endian
// float32 values in row-major order.
//
//   bytes 0..7   magic "FSMATF32"
//   bytes 8..11  rows (uint32, little-endian)
//   bytes 12..15 cols (uint32, little-endian)
inline constexpr char kMatrixMagic[8] = {'F', 'S', 'M', 'A', 'T', 'F', '3', '2'};
inline constexpr std::size_t kMatrixHeaderBytes = 16;

void write_matrix(const std::filesystem::path& path, const MatrixF& m);
MatrixF read_matrix(const std::filesystem::path& path);

/// Reads a matrix and checks its shape; `rows`/`cols` of -1 accept any extent.
MatrixF read_matrix(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols);

/// Read-only memory mapping of a matrix file. Rows are addressed in place.
class MappedMatrix {
public:
    static std::shared_ptr<const MappedMatrix> open(const std::filesystem::path& path);

    MappedMatrix(const MappedMatrix&) = delete;
    MappedMatrix& operator=(const MappedMatrix&) = delete;
    ~MappedMatrix();

    Eigen::Map<const MatrixF> view() const { return {data_, rows_, cols_}; }
    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }

private:
    MappedMatrix() = default;

    void* base_ = nullptr;
    std::size_t length_ = 0;
    const float* data_ = nullptr;
    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
    MatrixF owned_;  // used when mapping is unavailable
};

/// Flat `key=value` text file; '#' starts a comment line.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

const std::string& require_key(const KeyValues& kv, const std::string& key, const std::filesystem::path& source);
long require_int(const KeyValues& kv, const std::string& key, const std::filesystem::path& source);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace featurescope

#endif
