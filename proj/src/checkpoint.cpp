#include "hlps/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hlps::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    void take(void* dst, std::size_t n) {
        if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        take(&v, 4);
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void Archive::put(const std::string& name, const Eigen::MatrixXd& value) {
    if (name.empty()) throw CheckpointError("empty tensor name");
    tensors_[name] = value;
}

void Archive::put_text(const std::string& name, const std::string& text) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(text.size()), 1);
    for (size_t i = 0; i < text.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<unsigned char>(text[i]);
    put(name, m);
}

const Eigen::MatrixXd& Archive::get(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw CheckpointError("checkpoint has no segment '" + name + "'");
    return it->second;
}

const Eigen::MatrixXd& Archive::get(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
    const auto& m = get(name);
    if (m.rows() != rows || m.cols() != cols) {
        throw CheckpointError("segment '" + name + "' is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    return m;
}

double Archive::get_scalar(const std::string& name) const { return get(name, 1, 1)(0, 0); }

std::string Archive::get_text(const std::string& name) const {
    const auto& m = get(name);
    std::string s(static_cast<size_t>(m.size()), '\0');
    for (Eigen::Index i = 0; i < m.size(); ++i) s[static_cast<size_t>(i)] = static_cast<char>(m(i));
    return s;
}

std::string Archive::serialize() const {
    std::string out = "HLPS";
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, m] : tensors_) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(m.rows()));
        put_u32(out, static_cast<std::uint32_t>(m.cols()));
        out.append(reinterpret_cast<const char*>(m.data()), static_cast<size_t>(m.size()) * sizeof(double));
    }
    return out;
}

Archive Archive::deserialize(const std::string& bytes) {
    Reader r(bytes);
    char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, "HLPS", 4) != 0) throw CheckpointError("bad checkpoint magic");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    Archive a;
    for (std::uint32_t s = 0; s < count; ++s) {
        const std::uint32_t len = r.u32();
        std::string name(len, '\0');
        r.take(name.data(), len);
        const std::uint32_t rows = r.u32(), cols = r.u32();
        Eigen::MatrixXd m(rows, cols);
        r.take(m.data(), static_cast<size_t>(rows) * cols * sizeof(double));
        a.tensors_[name] = std::move(m);
    }
    if (!r.done()) throw CheckpointError("trailing bytes after last segment");
    return a;
}

void Archive::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + tmp);
        const std::string bytes = serialize();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into " + path);
}

Archive Archive::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace hlps::ckpt
