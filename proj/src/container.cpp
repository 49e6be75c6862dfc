#include "deepshore/container.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "deepshore/error.hpp"

namespace deepshore {

namespace {

constexpr std::array<const char*, 4> kKinds{"dataset", "coeffs", "model", "report"};

bool valid_kind(const std::string& kind) {
    return std::any_of(kKinds.begin(), kKinds.end(), [&](const char* k) { return kind == k; });
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::size_t Segment::element_count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return shape.empty() ? 0 : n;
}

Segment Segment::from_matrix(std::string name, const Eigen::MatrixXd& m) {
    Segment s{std::move(name), {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, {}};
    s.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) s.data.push_back(static_cast<float>(m(r, c)));
    return s;
}

Segment Segment::from_vector(std::string name, const std::vector<double>& v) {
    Segment s{std::move(name), {v.size()}, {}};
    s.data.assign(v.begin(), v.end());
    return s;
}

Eigen::MatrixXd Segment::to_matrix() const {
    const std::size_t rows = shape.empty() ? 0 : shape[0];
    const std::size_t cols = shape.size() > 1 ? element_count() / std::max<std::size_t>(rows, 1) : 1;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r * cols + c];
    return m;
}

const Segment& Container::segment(const std::string& name) const {
    for (const auto& s : segments)
        if (s.name == name) return s;
    throw FormatError("container has no segment named '" + name + "'");
}

bool Container::has_segment(const std::string& name) const {
    return std::any_of(segments.begin(), segments.end(), [&](const Segment& s) { return s.name == name; });
}

void write_container(std::ostream& out, const Container& c) {
    if (!valid_kind(c.kind)) throw InvalidArgument("unknown container kind: " + c.kind);
    nlohmann::json header;
    header["kind"] = c.kind;
    header["dtype"] = "f32le";
    header["metadata"] = c.metadata;
    header["segments"] = nlohmann::json::array();
    for (const auto& s : c.segments) {
        if (s.element_count() != s.data.size()) throw InvalidArgument("segment shape does not match its data");
        header["segments"].push_back({{"name", s.name}, {"shape", s.shape}});
    }
    const std::string text = header.dump();
    out.write(kContainerMagic, 8);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& s : c.segments) {
        for (float f : s.data) {
            const auto bits = std::bit_cast<std::uint32_t>(f);
            put_u32(out, bits);
        }
    }
    if (!out) throw FormatError("failed writing container");
}

void write_container(const std::filesystem::path& path, const Container& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    write_container(out, c);
}

Container read_container(std::istream& in) {
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0)
        throw FormatError("not a DSHORE01 container");
    const std::uint32_t header_len = get_u32(bytes.data() + 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) throw FormatError("truncated container header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid container header: ") + e.what());
    }
    Container c;
    try {
        c.kind = header.at("kind").get<std::string>();
        if (header.at("dtype").get<std::string>() != "f32le") throw FormatError("unsupported dtype");
        c.metadata = header.value("metadata", nlohmann::json::object());
        for (const auto& seg : header.at("segments")) {
            Segment s;
            s.name = seg.at("name").get<std::string>();
            s.shape = seg.at("shape").get<std::vector<std::size_t>>();
            c.segments.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed container header: ") + e.what());
    }
    if (!valid_kind(c.kind)) throw FormatError("unknown container kind: " + c.kind);

    std::size_t expected = 0;
    for (const auto& s : c.segments) expected += s.element_count();
    const std::size_t payload = bytes.size() - 12 - header_len;
    if (payload != expected * 4) throw FormatError("payload size does not match declared shapes");

    const unsigned char* p = bytes.data() + 12 + header_len;
    for (auto& s : c.segments) {
        s.data.resize(s.element_count());
        for (auto& f : s.data) {
            f = std::bit_cast<float>(get_u32(p));
            p += 4;
        }
    }
    return c;
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open input file: " + path.string());
    return read_container(in);
}

Container read_container(const std::filesystem::path& path, const std::string& expected_kind) {
    Container c = read_container(path);
    if (c.kind != expected_kind)
        throw FormatError("expected a '" + expected_kind + "' container, found '" + c.kind + "'");
    return c;
}

}  // namespace deepshore
