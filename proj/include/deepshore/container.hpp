#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace deepshore {

/// Binary container: "DSHORE01", u32 LE header length, UTF-8 JSON header,
/// then little-endian f32 payload segments in header order.
inline constexpr char kContainerMagic[9] = "DSHORE01";

struct Segment {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> data;  // row-major

    std::size_t element_count() const;
    static Segment from_matrix(std::string name, const Eigen::MatrixXd& m);
    static Segment from_vector(std::string name, const std::vector<double>& v);
    /// 1-D segments become a single column.
    Eigen::MatrixXd to_matrix() const;
};

struct Container {
    std::string kind;  // dataset, coeffs, model or report
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<Segment> segments;

    const Segment& segment(const std::string& name) const;
    bool has_segment(const std::string& name) const;
};

void write_container(std::ostream& out, const Container& c);
void write_container(const std::filesystem::path& path, const Container& c);

/// Validates magic, kind and that shapes account for every payload byte.
Container read_container(std::istream& in);
Container read_container(const std::filesystem::path& path);
/// Also checks the kind.
Container read_container(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace deepshore
