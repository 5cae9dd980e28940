#include "hlps/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace hlps {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::string_view stream) {
    const std::uint64_t h = fnv1a(stream);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    engine_.seed(seq);
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
}

std::vector<double> Rng::save_state() const {
    std::ostringstream os;
    os << engine_;
    std::istringstream is(os.str());
    std::vector<double> out;
    std::uint64_t word = 0;
    while (is >> word) {
        out.push_back(static_cast<double>(word & 0xffffffffULL));
        out.push_back(static_cast<double>(word >> 32));
    }
    return out;
}

void Rng::load_state(const std::vector<double>& halves) {
    if (halves.size() % 2 != 0 || halves.empty()) throw std::invalid_argument("rng state: odd length");
    std::ostringstream os;
    for (std::size_t i = 0; i < halves.size(); i += 2) {
        const auto lo = static_cast<std::uint64_t>(halves[i]);
        const auto hi = static_cast<std::uint64_t>(halves[i + 1]);
        if (i) os << ' ';
        os << (lo | (hi << 32));
    }
    std::istringstream is(os.str());
    is >> engine_;
    if (is.fail()) throw std::invalid_argument("rng state: malformed");
}

}  // namespace hlps
