#include <doctest.h>

#include "hlps/replay_buffer.hpp"

using namespace hlps;
using rl::ReplayBuffer;
using rl::Transition;

namespace {

Transition make(long episode, long step, bool last, double tag) {
    Transition t;
    t.s = Eigen::VectorXd::Constant(3, tag);
    t.s_next = Eigen::VectorXd::Constant(3, tag + 0.5);
    t.g = Eigen::VectorXd::Constant(2, tag * 10);
    t.g_next = t.g;
    t.a = Eigen::VectorXd::Constant(2, -tag);
    t.r_env = tag;
    t.r_int = -tag;
    t.done = last && step % 2 == 0;
    t.last = last;
    t.episode = episode;
    t.step = step;
    return t;
}

// Episodes of the given lengths, tag = global index.
ReplayBuffer filled(const std::vector<int>& lengths, std::size_t capacity = 1000) {
    ReplayBuffer b(capacity, 3, 2, 2);
    double tag = 0;
    long ep = 0;
    for (int len : lengths) {
        for (int s = 0; s < len; ++s) b.push(make(ep, s, s == len - 1, tag++));
        ++ep;
    }
    return b;
}

}  // namespace

TEST_CASE("push and read back") {
    auto b = filled({3});
    REQUIRE(b.size() == 3);
    auto t = b.at(1);
    CHECK(t.s(0) == 1.0);
    CHECK(t.s_next(2) == 1.5);
    CHECK(t.g(0) == 10.0);
    CHECK(t.a(1) == -1.0);
    CHECK(t.r_env == 1.0);
    CHECK(t.r_int == -1.0);
    CHECK(t.step == 1);
    CHECK_FALSE(t.last);
    CHECK(b.last(2));
    CHECK(b.done(2) == (2 % 2 == 0));
    CHECK_THROWS(b.push(Transition{}));  // wrong dimensions
}

TEST_CASE("ring buffer evicts the oldest") {
    auto b = filled({5, 5}, 7);
    CHECK(b.size() == 7);
    CHECK(b.state(0)(0) == 3.0);
    CHECK(b.episode(6) == 1);
    CHECK(b.step(6) == 4);
}

TEST_CASE("triplets stay inside one episode and truncate at its end") {
    auto b = filled({10, 4});
    rl::TripletIndex t{};
    REQUIRE(b.triplet_at(0, 5, t));
    CHECK(t.end == 4);
    REQUIRE(b.triplet_at(7, 5, t));
    CHECK(t.end == 9);  // episode 0 ends at 9
    REQUIRE(b.triplet_at(10, 5, t));
    CHECK(t.end == 13);
    Rng rng(1);
    for (const auto& x : b.sample_triplets(200, 5, rng)) {
        CHECK(b.episode(x.i) == b.episode(x.end));
        CHECK(x.end >= x.i);
        CHECK(x.end - x.i <= 4);
    }
}

TEST_CASE("an unfinished episode only yields complete triplets") {
    ReplayBuffer b(100, 3, 2, 2);
    for (int s = 0; s < 6; ++s) b.push(make(0, s, false, s));
    rl::TripletIndex t{};
    CHECK(b.triplet_at(1, 5, t));
    CHECK_FALSE(b.triplet_at(2, 5, t));
}

TEST_CASE("segments start at multiples of k") {
    auto b = filled({12});
    rl::SegmentIndex s{};
    CHECK(b.segment_at(0, 5, s));
    CHECK(s.end == 4);
    CHECK_FALSE(b.segment_at(3, 5, s));
    CHECK(b.segment_at(10, 5, s));
    CHECK(s.end == 11);
    CHECK(b.segment_reward({0, 4}) == doctest::Approx(0 + 1 + 2 + 3 + 4));
    Rng rng(2);
    for (const auto& x : b.sample_segments(50, 5, rng)) CHECK(b.step(x.start) % 5 == 0);
}

TEST_CASE("windows span up to T segments and stop at the episode end") {
    auto b = filled({12});
    rl::WindowIndex w{};
    REQUIRE(b.window_at(0, 5, 2, w));
    CHECK(w.end == 9);
    CHECK(w.segments == 2);
    CHECK_FALSE(w.episode_end);
    REQUIRE(b.window_at(5, 5, 3, w));
    CHECK(w.end == 11);
    CHECK(w.episode_end);
    const auto states = b.window_states(5, 11);
    CHECK(states.rows() == 8);
    CHECK(states(0, 0) == 5.0);
    CHECK(states(7, 0) == 11.5);
}

TEST_CASE("sampling from an empty or ineligible buffer returns nothing") {
    ReplayBuffer b(10, 3, 2, 2);
    Rng rng(1);
    CHECK(b.sample_uniform(5, rng).empty());
    CHECK(b.sample_triplets(5, 3, rng).empty());
    b.push(make(0, 1, false, 0));  // mid-episode start, never a segment
    CHECK(b.sample_segments(5, 3, rng).empty());
    CHECK(b.sample_windows(5, 3, 2, rng).empty());
}

TEST_CASE("export and import round-trip") {
    auto b = filled({5, 5}, 7);
    ReplayBuffer c(7, 3, 2, 2);
    c.import_rows(b.export_rows());
    REQUIRE(c.size() == b.size());
    CHECK(c.export_rows() == b.export_rows());
    c.push(make(9, 0, true, 99));
    b.push(make(9, 0, true, 99));
    CHECK(c.export_rows() == b.export_rows());
    ReplayBuffer small(3, 3, 2, 2);
    CHECK_THROWS(small.import_rows(b.export_rows()));
}
