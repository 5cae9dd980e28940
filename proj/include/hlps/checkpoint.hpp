#pragma once

// Binary container of named tensors.
//
//   "HLPS"            4 bytes magic
//   u32 version
//   u32 segment count
//   per segment: u32 name length, name bytes, u32 rows, u32 cols,
//                rows*cols little-endian f64 in column-major order
//
// All integers are little-endian.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace hlps::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Archive {
public:
    void put(const std::string& name, const Eigen::MatrixXd& value);
    void put_scalar(const std::string& name, double v) { put(name, Eigen::MatrixXd::Constant(1, 1, v)); }
    void put_text(const std::string& name, const std::string& text);

    bool has(const std::string& name) const { return tensors_.count(name) != 0; }
    const Eigen::MatrixXd& get(const std::string& name) const;
    /// get() with a shape check.
    const Eigen::MatrixXd& get(const std::string& name, Eigen::Index rows, Eigen::Index cols) const;
    double get_scalar(const std::string& name) const;
    std::string get_text(const std::string& name) const;
    const std::map<std::string, Eigen::MatrixXd>& tensors() const { return tensors_; }

    std::string serialize() const;
    static Archive deserialize(const std::string& bytes);

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

private:
    std::map<std::string, Eigen::MatrixXd> tensors_;
};

}  // namespace hlps::ckpt
