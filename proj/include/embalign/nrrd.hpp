#pragma once

// Strict NRRD subset: fixed header field order, raw little-endian payload,
// 3D float intensities or uint8 masks.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>

#include "embalign/errors.hpp"
#include "embalign/volume.hpp"

namespace embalign {

namespace nrrd_detail {

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s, const char* field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(std::string("malformed number in field '") + field + "': " + std::string(s));
    }
    return v;
}

inline std::size_t parse_size(std::string_view s, const char* field) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) {
        throw ParseError(std::string("malformed size in field '") + field + "': " + std::string(s));
    }
    return v;
}

inline std::string_view expect_field(std::string_view line, std::string_view key) {
    const std::string prefix = std::string(key) + ": ";
    if (line.substr(0, prefix.size()) != prefix) {
        throw ParseError("expected header field '" + std::string(key) + "', got '" + std::string(line) + "'");
    }
    return line.substr(prefix.size());
}

enum class ScalarType { Float32, UInt8 };

struct Header {
    ScalarType type = ScalarType::Float32;
    Dims dims{};
    Spacing spacing{};
};

inline Header parse_header(std::istream& in) {
    auto next_line = [&](const char* what) {
        std::string line;
        if (!std::getline(in, line)) throw ParseError(std::string("header ended before field '") + what + "'");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    Header h;
    if (next_line("magic") != "NRRD0004") throw ParseError("missing NRRD0004 magic");

    const std::string type_line = next_line("type");
    const auto type = expect_field(type_line, "type");
    if (type == "float") {
        h.type = ScalarType::Float32;
    } else if (type == "uint8") {
        h.type = ScalarType::UInt8;
    } else {
        throw ParseError("unsupported value in field 'type': " + std::string(type));
    }

    const std::string dim_line = next_line("dimension");
    if (expect_field(dim_line, "dimension") != "3") throw ParseError("field 'dimension' must be 3");

    const std::string sizes_line = next_line("sizes");
    {
        std::istringstream ss{std::string(expect_field(sizes_line, "sizes"))};
        std::array<std::string, 3> tok;
        std::string extra;
        if (!(ss >> tok[0] >> tok[1] >> tok[2]) || (ss >> extra)) {
            throw ParseError("field 'sizes' must hold exactly three integers");
        }
        for (int d = 0; d < 3; ++d) h.dims[d] = parse_size(tok[d], "sizes");
    }

    const std::string dir_line = next_line("space directions");
    {
        const auto value = expect_field(dir_line, "space directions");
        std::istringstream ss{std::string(value)};
        std::array<std::string, 3> tok;
        std::string extra;
        if (!(ss >> tok[0] >> tok[1] >> tok[2]) || (ss >> extra)) {
            throw ParseError("field 'space directions' must hold three vectors");
        }
        for (int d = 0; d < 3; ++d) {
            const std::string& t = tok[d];
            if (t.size() < 7 || t.front() != '(' || t.back() != ')') {
                throw ParseError("malformed vector in field 'space directions': " + t);
            }
            std::array<std::string_view, 3> comp;
            std::string_view body(t.data() + 1, t.size() - 2);
            for (int c = 0; c < 3; ++c) {
                const auto comma = body.find(',');
                if ((c < 2) == (comma == std::string_view::npos)) {
                    throw ParseError("malformed vector in field 'space directions': " + t);
                }
                comp[c] = body.substr(0, comma);
                body = c < 2 ? body.substr(comma + 1) : std::string_view{};
            }
            for (int c = 0; c < 3; ++c) {
                const double v = parse_double(comp[c], "space directions");
                if (c != d && v != 0.0) throw ParseError("field 'space directions' must be axis-aligned");
                if (c == d) {
                    if (!(v > 0.0) || !std::isfinite(v)) {
                        throw ParseError("field 'space directions' spacing must be positive");
                    }
                    h.spacing[d] = v;
                }
            }
        }
    }

    const std::string endian_line = next_line("endian");
    if (expect_field(endian_line, "endian") != "little") throw ParseError("field 'endian' must be little");
    const std::string enc_line = next_line("encoding");
    if (expect_field(enc_line, "encoding") != "raw") throw ParseError("field 'encoding' must be raw");

    const std::string blank = next_line("blank separator");
    if (!blank.empty()) {
        const auto colon = blank.find(':');
        throw ParseError("unknown header field '" + blank.substr(0, colon) + "'");
    }
    return h;
}

template <class T>
void read_payload(std::istream& in, Volume<T>& v) {
    const std::size_t bytes = v.size() * sizeof(T);
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (payload.size() != bytes) {
        throw TruncationError("payload holds " + std::to_string(payload.size()) + " bytes, header declares " +
                              std::to_string(bytes));
    }
    v.data.resize(v.size());
    std::memcpy(v.data.data(), payload.data(), bytes);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        for (auto& x : v.data) {
            auto raw = std::bit_cast<std::array<unsigned char, sizeof(T)>>(x);
            std::reverse(raw.begin(), raw.end());
            x = std::bit_cast<T>(raw);
        }
    }
}

template <class T>
void write_stream(std::ostream& out, const Volume<T>& v) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, std::uint8_t>);
    out << "NRRD0004\n";
    out << "type: " << (std::is_same_v<T, float> ? "float" : "uint8") << "\n";
    out << "dimension: 3\n";
    out << "sizes: " << v.dims[0] << ' ' << v.dims[1] << ' ' << v.dims[2] << "\n";
    out << "space directions: (" << format_double(v.spacing[0]) << ",0,0) (0," << format_double(v.spacing[1])
        << ",0) (0,0," << format_double(v.spacing[2]) << ")\n";
    out << "endian: little\n";
    out << "encoding: raw\n\n";
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * sizeof(T)));
    } else {
        for (T x : v.data) {
            auto raw = std::bit_cast<std::array<char, sizeof(T)>>(x);
            std::reverse(raw.begin(), raw.end());
            out.write(raw.data(), sizeof(T));
        }
    }
}

} // namespace nrrd_detail

using AnyVolume = std::variant<Volume3D, Mask3D>;

/// Parses a float image or a uint8 mask from a stream.
inline AnyVolume read_volume(std::istream& in) {
    const auto h = nrrd_detail::parse_header(in);
    if (h.type == nrrd_detail::ScalarType::Float32) {
        Volume3D v;
        v.dims = h.dims;
        v.spacing = h.spacing;
        nrrd_detail::read_payload(in, v);
        for (float x : v.data) {
            if (!std::isfinite(x)) throw ParseError("payload contains non-finite intensity");
        }
        return v;
    }
    Mask3D m;
    m.dims = h.dims;
    m.spacing = h.spacing;
    nrrd_detail::read_payload(in, m);
    validate(m);
    return m;
}

inline AnyVolume read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return read_volume(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const TruncationError& e) {
        throw TruncationError(path.string() + ": " + e.what());
    } catch (const MaskValueError& e) {
        throw MaskValueError(path.string() + ": " + e.what());
    }
}

/// Reads an intensity image; uint8 files are widened to float.
inline Volume3D read_image(const std::filesystem::path& path) {
    auto any = read_volume(path);
    if (auto* v = std::get_if<Volume3D>(&any)) return std::move(*v);
    const auto& m = std::get<Mask3D>(any);
    Volume3D v(m.dims, m.spacing);
    for (std::size_t i = 0; i < m.data.size(); ++i) v.data[i] = m.data[i];
    return v;
}

/// Reads a mask; float files must contain only 0 and 1.
inline Mask3D read_mask(const std::filesystem::path& path) {
    auto any = read_volume(path);
    if (auto* m = std::get_if<Mask3D>(&any)) return std::move(*m);
    const auto& v = std::get<Volume3D>(any);
    Mask3D m(v.dims, v.spacing);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (v.data[i] != 0.0f && v.data[i] != 1.0f) {
            throw MaskValueError(path.string() + ": mask value is not 0 or 1");
        }
        m.data[i] = v.data[i] != 0.0f ? 1 : 0;
    }
    return m;
}

template <class T>
void write_volume(std::ostream& out, const Volume<T>& v) {
    nrrd_detail::write_stream(out, v);
}

template <class T>
void write_volume(const std::filesystem::path& path, const Volume<T>& v) {
    validate_geometry(v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    nrrd_detail::write_stream(out, v);
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace embalign
