// SPDX-License-Identifier: Apache-2.0

#include "kpcc/point_cloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "kpcc/errors.hpp"

namespace kpcc {

int bits_to_cover(std::uint64_t value) {
    return std::max(1, static_cast<int>(std::bit_width(value)));
}

PointCloud::PointCloud(std::vector<Point3> points, int bit_depth)
    : points_(std::move(points)), bit_depth_(bit_depth) {
    if (bit_depth < 1 || bit_depth > kMaxBitDepth) {
        throw ParameterError("bit depth " + std::to_string(bit_depth) + " outside [1, 16]");
    }
    std::sort(points_.begin(), points_.end());
    points_.erase(std::unique(points_.begin(), points_.end()), points_.end());
    const std::uint32_t limit = 1u << bit_depth;
    for (const auto& p : points_) {
        if (p.x >= limit || p.y >= limit || p.z >= limit) {
            throw DomainError("coordinate exceeds declared bit depth " + std::to_string(bit_depth));
        }
    }
}

PointCloud PointCloud::with_min_depth(std::vector<Point3> points) {
    std::uint32_t max_coord = 0;
    for (const auto& p : points) {
        max_coord = std::max({max_coord, p.x, p.y, p.z});
    }
    const int depth = bits_to_cover(max_coord);
    if (depth > kMaxBitDepth) {
        throw DomainError("coordinate " + std::to_string(max_coord) + " needs more than 16 bits");
    }
    return PointCloud(std::move(points), depth);
}

double round_half_up(double v) { return std::floor(v + 0.5); }

// ---------------------------------------------------------------------------
// PLY reading

namespace {

enum class ScalarType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<ScalarType> parse_scalar(const std::string& name) {
    if (name == "char" || name == "int8") return ScalarType::i8;
    if (name == "uchar" || name == "uint8") return ScalarType::u8;
    if (name == "short" || name == "int16") return ScalarType::i16;
    if (name == "ushort" || name == "uint16") return ScalarType::u16;
    if (name == "int" || name == "int32") return ScalarType::i32;
    if (name == "uint" || name == "uint32") return ScalarType::u32;
    if (name == "float" || name == "float32") return ScalarType::f32;
    if (name == "double" || name == "float64") return ScalarType::f64;
    return std::nullopt;
}

std::size_t scalar_size(ScalarType t) {
    switch (t) {
    case ScalarType::i8:
    case ScalarType::u8: return 1;
    case ScalarType::i16:
    case ScalarType::u16: return 2;
    case ScalarType::i32:
    case ScalarType::u32:
    case ScalarType::f32: return 4;
    case ScalarType::f64: return 8;
    }
    return 0;
}

struct Property {
    std::string name;
    ScalarType type = ScalarType::f32;
    bool is_list = false;
    ScalarType count_type = ScalarType::u8;
};

struct Element {
    std::string name;
    std::uint64_t count = 0;
    std::vector<Property> props;
};

struct Header {
    bool binary = false;
    std::vector<Element> elements;
    std::optional<int> declared_depth;
};

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
        throw FormatError("PLY body truncated");
    }
    T value;
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(&value, buf, sizeof(T));
    } else {
        std::reverse(buf, buf + sizeof(T));
        std::memcpy(&value, buf, sizeof(T));
    }
    return value;
}

double read_binary_scalar(std::istream& in, ScalarType t) {
    switch (t) {
    case ScalarType::i8: return read_le<std::int8_t>(in);
    case ScalarType::u8: return read_le<std::uint8_t>(in);
    case ScalarType::i16: return read_le<std::int16_t>(in);
    case ScalarType::u16: return read_le<std::uint16_t>(in);
    case ScalarType::i32: return read_le<std::int32_t>(in);
    case ScalarType::u32: return read_le<std::uint32_t>(in);
    case ScalarType::f32: return read_le<float>(in);
    case ScalarType::f64: return read_le<double>(in);
    }
    return 0.0;
}

Header parse_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
        throw FormatError("missing 'ply' magic");
    }
    Header h;
    bool have_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header") {
            if (!have_format) throw FormatError("PLY header lacks a format line");
            return h;
        }
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                h.binary = false;
            } else if (fmt == "binary_little_endian") {
                h.binary = true;
            } else {
                throw FormatError("unsupported PLY format '" + fmt + "'");
            }
            have_format = true;
        } else if (keyword == "element") {
            Element e;
            ls >> e.name >> e.count;
            if (!ls) throw FormatError("bad element line: " + line);
            h.elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (h.elements.empty()) throw FormatError("property before any element");
            Property p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string count_type, item_type;
                ls >> count_type >> item_type >> p.name;
                auto ct = parse_scalar(count_type);
                auto it = parse_scalar(item_type);
                if (!ct || !it) throw FormatError("bad list property: " + line);
                p.is_list = true;
                p.count_type = *ct;
                p.type = *it;
            } else {
                auto t = parse_scalar(type);
                if (!t) throw FormatError("unknown property type '" + type + "'");
                p.type = *t;
                ls >> p.name;
            }
            h.elements.back().props.push_back(std::move(p));
        } else if (keyword == "comment") {
            std::string tag;
            int depth = 0;
            if (ls >> tag >> depth && tag == "bit_depth") {
                h.declared_depth = depth;
            }
        }
        // obj_info and unknown keywords are ignored
    }
    throw FormatError("PLY header not terminated");
}

void skip_binary_element(std::istream& in, const Element& e) {
    for (std::uint64_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
            if (p.is_list) {
                const auto n = static_cast<std::uint64_t>(read_binary_scalar(in, p.count_type));
                in.ignore(static_cast<std::streamsize>(n * scalar_size(p.type)));
            } else {
                in.ignore(static_cast<std::streamsize>(scalar_size(p.type)));
            }
        }
        if (!in) throw FormatError("PLY body truncated in element '" + e.name + "'");
    }
}

void skip_ascii_element(std::istream& in, const Element& e) {
    std::string line;
    for (std::uint64_t i = 0; i < e.count; ++i) {
        if (!std::getline(in, line)) throw FormatError("PLY body truncated in element '" + e.name + "'");
    }
}

Point3 to_voxel(const std::array<double, 3>& v) {
    Point3 out;
    std::uint32_t* dst[3] = {&out.x, &out.y, &out.z};
    for (int a = 0; a < 3; ++a) {
        if (std::isnan(v[a])) throw DomainError("NaN vertex coordinate");
        const double r = round_half_up(v[a]);
        if (r < 0.0) throw DomainError("negative vertex coordinate " + std::to_string(v[a]));
        if (r >= static_cast<double>(1u << kMaxBitDepth)) {
            throw DomainError("vertex coordinate " + std::to_string(v[a]) + " exceeds 16 bits");
        }
        *dst[a] = static_cast<std::uint32_t>(r);
    }
    return out;
}

} // namespace

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const Header h = parse_header(in);

    const auto vertex_it = std::find_if(h.elements.begin(), h.elements.end(),
                                        [](const Element& e) { return e.name == "vertex"; });
    if (vertex_it == h.elements.end()) throw FormatError("PLY has no vertex element");

    std::array<int, 3> axis_prop = {-1, -1, -1};
    for (std::size_t i = 0; i < vertex_it->props.size(); ++i) {
        const auto& p = vertex_it->props[i];
        const int axis = p.name == "x" ? 0 : p.name == "y" ? 1 : p.name == "z" ? 2 : -1;
        if (axis >= 0 && !p.is_list) axis_prop[axis] = static_cast<int>(i);
    }
    if (std::find(axis_prop.begin(), axis_prop.end(), -1) != axis_prop.end()) {
        throw FormatError("vertex element lacks x/y/z properties");
    }
    if (vertex_it->count == 0) throw EmptyInputError("PLY has zero vertices");

    std::vector<Point3> points;
    points.reserve(vertex_it->count);
    for (auto e = h.elements.begin(); e != h.elements.end(); ++e) {
        if (e != vertex_it) {
            if (e > vertex_it) break;
            h.binary ? skip_binary_element(in, *e) : skip_ascii_element(in, *e);
            continue;
        }
        std::string line;
        for (std::uint64_t i = 0; i < e->count; ++i) {
            std::array<double, 3> v{};
            if (h.binary) {
                for (std::size_t k = 0; k < e->props.size(); ++k) {
                    const auto& p = e->props[k];
                    if (p.is_list) {
                        const auto n = static_cast<std::uint64_t>(read_binary_scalar(in, p.count_type));
                        in.ignore(static_cast<std::streamsize>(n * scalar_size(p.type)));
                        continue;
                    }
                    const double value = read_binary_scalar(in, p.type);
                    for (int a = 0; a < 3; ++a) {
                        if (axis_prop[a] == static_cast<int>(k)) v[a] = value;
                    }
                }
            } else {
                if (!std::getline(in, line)) throw FormatError("PLY body truncated in vertex list");
                std::istringstream ls(line);
                for (std::size_t k = 0; k < e->props.size(); ++k) {
                    const auto& p = e->props[k];
                    if (p.is_list) {
                        std::uint64_t n = 0;
                        ls >> n;
                        for (std::uint64_t j = 0; j < n; ++j) {
                            double ignored;
                            ls >> ignored;
                        }
                        continue;
                    }
                    std::string token;
                    if (!(ls >> token)) throw FormatError("short vertex line: " + line);
                    double value = 0.0;
                    try {
                        value = std::stod(token);
                    } catch (const std::exception&) {
                        throw FormatError("bad vertex value '" + token + "'");
                    }
                    for (int a = 0; a < 3; ++a) {
                        if (axis_prop[a] == static_cast<int>(k)) v[a] = value;
                    }
                }
            }
            points.push_back(to_voxel(v));
        }
    }

    PointCloud pc = PointCloud::with_min_depth(std::move(points));
    if (h.declared_depth && *h.declared_depth > pc.bit_depth() && *h.declared_depth <= kMaxBitDepth) {
        return PointCloud(pc.points(), *h.declared_depth);
    }
    return pc;
}

void save_ply(const PointCloud& pc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "ply\n"
        << "format binary_little_endian 1.0\n"
        << "comment bit_depth " << pc.bit_depth() << "\n"
        << "element vertex " << pc.size() << "\n"
        << "property uint x\nproperty uint y\nproperty uint z\n"
        << "end_header\n";
    std::vector<unsigned char> body;
    body.reserve(pc.size() * 12);
    for (const auto& p : pc.points()) {
        for (std::uint32_t c : {p.x, p.y, p.z}) {
            for (int b = 0; b < 4; ++b) body.push_back(static_cast<unsigned char>(c >> (8 * b)));
        }
    }
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

PointCloud voxelize(std::span<const std::array<double, 3>> raw_points, int target_depth) {
    if (target_depth < 1 || target_depth > kMaxBitDepth) {
        throw ParameterError("target depth outside [1, 16]");
    }
    if (raw_points.empty()) throw EmptyInputError("voxelize: no points");
    std::array<double, 3> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& p : raw_points) {
        for (int a = 0; a < 3; ++a) {
            if (std::isnan(p[a])) throw DomainError("voxelize: NaN coordinate");
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    const double top = static_cast<double>((1u << target_depth) - 1);
    const double scale = extent > 0.0 ? top / extent : 0.0;

    std::vector<Point3> points;
    points.reserve(raw_points.size());
    for (const auto& p : raw_points) {
        std::array<std::uint32_t, 3> c{};
        for (int a = 0; a < 3; ++a) {
            const double v = std::clamp(round_half_up((p[a] - lo[a]) * scale), 0.0, top);
            c[a] = static_cast<std::uint32_t>(v);
        }
        points.push_back({c[0], c[1], c[2]});
    }
    return PointCloud(std::move(points), target_depth);
}

} // namespace kpcc
