#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deepshore/container.hpp"
#include "deepshore/error.hpp"

using namespace deepshore;

namespace {

Container sample_container() {
    Container c;
    c.kind = "coeffs";
    c.metadata = {{"zeta", 812.5}, {"radial_order", 6}};
    Eigen::MatrixXd a(3, 4);
    a << 0.5, -1.25, 2.0, 3.5, 1e-3, -7.0, 0.1, 4.0, 8.0, -0.75, 6.5, 1e6;
    c.segments.push_back(Segment::from_matrix("a", a));
    c.segments.push_back(Segment::from_vector("b", {1.0, -2.0, 3.25}));
    return c;
}

std::string bytes_of(const Container& c) {
    std::ostringstream s(std::ios::binary);
    write_container(s, c);
    return s.str();
}

}  // namespace

TEST_CASE("container layout") {
    const std::string bytes = bytes_of(sample_container());
    CHECK(bytes.substr(0, 8) == "DSHORE01");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 8);
    const std::uint32_t header_len = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    const auto header = nlohmann::json::parse(bytes.substr(12, header_len));
    CHECK(header["kind"] == "coeffs");
    CHECK(header["dtype"] == "f32le");
    CHECK(header["segments"][0]["shape"] == nlohmann::json::array({3, 4}));
    CHECK(bytes.size() == 12 + header_len + 4 * (12 + 3));

    // First payload float is a(0,0), little-endian.
    float first = 0.0f;
    std::memcpy(&first, bytes.data() + 12 + header_len, 4);
    CHECK(first == 0.5f);
}

TEST_CASE("container round trip is bit-identical") {
    for (const char* kind : {"dataset", "coeffs", "model", "report"}) {
        Container c = sample_container();
        c.kind = kind;
        const std::string once = bytes_of(c);
        std::istringstream in(once, std::ios::binary);
        const Container back = read_container(in);
        CHECK(back.kind == kind);
        CHECK(back.metadata == c.metadata);
        CHECK(bytes_of(back) == once);
        CHECK(back.segment("b").to_matrix()(2, 0) == 3.25);
    }
}

TEST_CASE("container validation") {
    const std::string good = bytes_of(sample_container());
    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        std::istringstream in(bad);
        CHECK_THROWS_AS(read_container(in), FormatError);
    }
    SUBCASE("truncated payload") {
        std::istringstream in(good.substr(0, good.size() - 4));
        CHECK_THROWS_AS(read_container(in), FormatError);
    }
    SUBCASE("trailing bytes") {
        std::istringstream in(good + "xxxx");
        CHECK_THROWS_AS(read_container(in), FormatError);
    }
    SUBCASE("unknown kind is rejected on write") {
        Container c = sample_container();
        c.kind = "weights";
        std::ostringstream out;
        CHECK_THROWS_AS(write_container(out, c), InvalidArgument);
    }
    SUBCASE("kind checked on load") {
        const auto path = std::filesystem::temp_directory_path() / "deepshore_kind_check.dsc";
        write_container(path, sample_container());
        CHECK_THROWS_AS(read_container(path, "model"), FormatError);
        CHECK_NOTHROW(read_container(path, "coeffs"));
        std::filesystem::remove(path);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_container(std::filesystem::path("/nonexistent/x.dsc")), InvalidArgument);
    }
    CHECK_THROWS_AS(sample_container().segment("zzz"), FormatError);
}
