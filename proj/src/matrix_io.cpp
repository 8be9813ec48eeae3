#include "featurescope/matrix_io.hpp"

#include <sys/mman.h>
#include <sys/stat.h>
#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace featurescope {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::shape_mismatch: return "shape_mismatch";
        case ErrorCode::data_error: return "data_error";
        case ErrorCode::io_error: return "io_error";
        case ErrorCode::context_overflow: return "context_overflow";
        case ErrorCode::retryable: return "retryable";
        case ErrorCode::unavailable: return "unavailable";
    }
    return "unknown";
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "matrix files are little-endian; add byte swapping for this target");

void put_u32(char* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const char* in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return v;
}

struct Header {
    Eigen::Index rows;
    Eigen::Index cols;
};

Header parse_header(const char* bytes, std::size_t available, const std::filesystem::path& path) {
    if (available < kMatrixHeaderBytes) fail(ErrorCode::data_error, "truncated matrix header", path.string());
    if (std::memcmp(bytes, kMatrixMagic, sizeof(kMatrixMagic)) != 0)
        fail(ErrorCode::data_error, "bad matrix magic", path.string());
    Header h{get_u32(bytes + 8), get_u32(bytes + 12)};
    const std::size_t need = kMatrixHeaderBytes + static_cast<std::size_t>(h.rows) * h.cols * sizeof(float);
    if (available != need)
        fail(ErrorCode::data_error, "matrix payload size does not match header",
             path.string() + ": header " + shape_string(h.rows, h.cols) + ", " + std::to_string(available) +
                 " bytes on disk, expected " + std::to_string(need));
    return h;
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const MatrixF& m) {
    if (!m.allFinite()) fail(ErrorCode::data_error, "refusing to write non-finite matrix", path.string());
    std::string bytes(kMatrixHeaderBytes + static_cast<std::size_t>(m.size()) * sizeof(float), '\0');
    std::memcpy(bytes.data(), kMatrixMagic, sizeof(kMatrixMagic));
    put_u32(bytes.data() + 8, static_cast<std::uint32_t>(m.rows()));
    put_u32(bytes.data() + 12, static_cast<std::uint32_t>(m.cols()));
    if (m.size() > 0) std::memcpy(bytes.data() + kMatrixHeaderBytes, m.data(), static_cast<std::size_t>(m.size()) * sizeof(float));
    write_text_file(path, bytes);
}

MatrixF read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "missing matrix file", path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const Header h = parse_header(bytes.data(), bytes.size(), path);
    MatrixF m(h.rows, h.cols);
    std::memcpy(m.data(), bytes.data() + kMatrixHeaderBytes, static_cast<std::size_t>(m.size()) * sizeof(float));
    if (!m.allFinite()) fail(ErrorCode::data_error, "matrix contains non-finite values", path.string());
    return m;
}

MatrixF read_matrix(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
    MatrixF m = read_matrix(path);
    if ((rows >= 0 && m.rows() != rows) || (cols >= 0 && m.cols() != cols))
        fail(ErrorCode::shape_mismatch, "matrix shape mismatch",
             path.filename().string() + ": got " + shape_string(m.rows(), m.cols()) + ", expected " +
                 shape_string(rows, cols));
    return m;
}

std::shared_ptr<const MappedMatrix> MappedMatrix::open(const std::filesystem::path& path) {
    std::shared_ptr<MappedMatrix> mm(new MappedMatrix());
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) fail(ErrorCode::io_error, "missing matrix file", path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        fail(ErrorCode::io_error, "cannot stat matrix file", path.string());
    }
    const auto length = static_cast<std::size_t>(st.st_size);
    void* base = length > 0 ? ::mmap(nullptr, length, PROT_READ, MAP_PRIVATE, fd, 0) : MAP_FAILED;
    ::close(fd);
    if (base == MAP_FAILED) {
        mm->owned_ = read_matrix(path);
        mm->data_ = mm->owned_.data();
        mm->rows_ = mm->owned_.rows();
        mm->cols_ = mm->owned_.cols();
        return mm;
    }
    mm->base_ = base;
    mm->length_ = length;
    try {
        const Header h = parse_header(static_cast<const char*>(base), length, path);
        mm->rows_ = h.rows;
        mm->cols_ = h.cols;
        mm->data_ = reinterpret_cast<const float*>(static_cast<const char*>(base) + kMatrixHeaderBytes);
    } catch (...) {
        ::munmap(base, length);
        mm->base_ = nullptr;
        throw;
    }
    if (!mm->view().allFinite()) fail(ErrorCode::data_error, "matrix contains non-finite values", path.string());
    return mm;
}

MappedMatrix::~MappedMatrix() {
    if (base_ != nullptr) ::munmap(base_, length_);
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "missing manifest", path.string());
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::data_error, "malformed manifest line", path.string() + ":" + std::to_string(lineno));
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
    std::ostringstream out;
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    write_text_file(path, out.str());
}

const std::string& require_key(const KeyValues& kv, const std::string& key, const std::filesystem::path& source) {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorCode::data_error, "manifest key missing: " + key, source.string());
    return it->second;
}

long require_int(const KeyValues& kv, const std::string& key, const std::filesystem::path& source) {
    const std::string& v = require_key(kv, key, source);
    try {
        std::size_t used = 0;
        const long value = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return value;
    } catch (const std::exception&) {
        fail(ErrorCode::data_error, "manifest key is not an integer: " + key, source.string());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "cannot open file", path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    // write-then-rename so that readers (and live mappings) never see a partial file
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::io_error, "cannot open for writing", tmp.string());
        out << content;
        if (!out) fail(ErrorCode::io_error, "write failed", tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::io_error, "cannot replace file", path.string() + ": " + ec.message());
}

}  // namespace featurescope
