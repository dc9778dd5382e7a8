#include "ectnet/mesh_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <vector>

#include "ectnet/error.hpp"

namespace ectnet {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream ss(line.substr(0, line.find('#')));
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    return tokens;
}

bool to_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (begin != end && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

bool to_long(const std::string& s, long long& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

// Merges exactly repeated vertex positions and assembles a closed complex.
class MeshBuilder {
public:
    void add_vertex(const std::array<double, 3>& p) {
        auto [it, inserted] = index_.try_emplace(p, static_cast<VertexIndex>(coords_.size() / 3));
        if (inserted) coords_.insert(coords_.end(), p.begin(), p.end());
        remap_.push_back(it->second);
    }

    std::size_t raw_vertex_count() const { return remap_.size(); }

    void add_face(const std::array<std::size_t, 3>& raw) {
        std::vector<VertexIndex> s = {remap_[raw[0]], remap_[raw[1]], remap_[raw[2]]};
        std::sort(s.begin(), s.end());
        // A face collapsed by vertex merging keeps its surviving edge.
        s.erase(std::unique(s.begin(), s.end()), s.end());
        faces_.push_back(std::move(s));
    }

    EmbeddedComplex build() {
        return EmbeddedComplex::from_simplices(3, std::move(coords_), faces_);
    }

private:
    std::map<std::array<double, 3>, VertexIndex> index_;
    std::vector<double> coords_;
    std::vector<VertexIndex> remap_;
    std::vector<std::vector<VertexIndex>> faces_;
};

}  // namespace

EmbeddedComplex parse_off(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> tokens;
    auto next_record = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            tokens = tokenize(line);
            if (!tokens.empty()) return true;
        }
        return false;
    };

    if (!next_record()) throw ParseError(line_no == 0 ? 1 : line_no, "empty input, expected OFF header");
    if (tokens.size() != 1 || tokens[0] != "OFF") throw ParseError(line_no, "expected header \"OFF\"");

    if (!next_record()) throw ParseError(line_no + 1, "missing counts line");
    long long nv = 0, nf = 0, ne = 0;
    if (tokens.size() < 2 || tokens.size() > 3 || !to_long(tokens[0], nv) || !to_long(tokens[1], nf) ||
        (tokens.size() == 3 && !to_long(tokens[2], ne)) || nv < 0 || nf < 0) {
        throw ParseError(line_no, "expected counts \"V F E\"");
    }

    MeshBuilder builder;
    for (long long i = 0; i < nv; ++i) {
        if (!next_record()) throw ParseError(line_no + 1, "count mismatch: fewer vertex lines than declared");
        std::array<double, 3> p{};
        if (tokens.size() != 3 || !to_double(tokens[0], p[0]) || !to_double(tokens[1], p[1]) ||
            !to_double(tokens[2], p[2])) {
            throw ParseError(line_no, "expected three vertex coordinates");
        }
        builder.add_vertex(p);
    }
    for (long long i = 0; i < nf; ++i) {
        if (!next_record()) throw ParseError(line_no + 1, "count mismatch: fewer face lines than declared");
        long long arity = 0;
        if (!to_long(tokens[0], arity)) throw ParseError(line_no, "malformed face line");
        if (arity != 3) throw ParseError(line_no, "non-triangle face with " + tokens[0] + " vertices");
        if (tokens.size() < 4) throw ParseError(line_no, "face line has fewer than 3 indices");
        std::array<std::size_t, 3> raw{};
        for (int k = 0; k < 3; ++k) {
            long long idx = 0;
            if (!to_long(tokens[k + 1], idx)) throw ParseError(line_no, "malformed vertex index");
            if (idx < 0 || static_cast<std::size_t>(idx) >= builder.raw_vertex_count()) {
                throw ParseError(line_no, "vertex index " + tokens[k + 1] + " out of range");
            }
            raw[k] = static_cast<std::size_t>(idx);
        }
        if (raw[0] == raw[1] || raw[1] == raw[2] || raw[0] == raw[2]) {
            throw ParseError(line_no, "face repeats a vertex index");
        }
        builder.add_face(raw);
    }
    if (next_record()) throw ParseError(line_no, "count mismatch: unexpected data after declared faces");
    return builder.build();
}

EmbeddedComplex parse_off(const std::string& text) {
    std::istringstream in(text);
    return parse_off(in);
}

void emit_off(const EmbeddedComplex& complex, std::ostream& out) {
    if (complex.ambient_dim() != 3) throw ArgumentError("OFF output requires vertices in R^3");
    const auto old_precision = out.precision(17);
    out << "OFF\n" << complex.num_vertices() << ' ' << complex.count(2) << ' ' << complex.count(1) << '\n';
    for (std::size_t v = 0; v < complex.num_vertices(); ++v) {
        const auto p = complex.vertex(v);
        out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
    }
    for (std::size_t f = 0; f < complex.count(2); ++f) {
        const auto s = complex.simplex(2, f);
        out << "3 " << s[0] << ' ' << s[1] << ' ' << s[2] << '\n';
    }
    out.precision(old_precision);
}

std::string emit_off(const EmbeddedComplex& complex) {
    std::ostringstream out;
    emit_off(complex, out);
    return out.str();
}

EmbeddedComplex parse_obj(std::istream& in) {
    MeshBuilder builder;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::array<long long, 3>> pending;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "v") {
            std::array<double, 3> p{};
            if (tokens.size() < 4 || tokens.size() > 5 || !to_double(tokens[1], p[0]) ||
                !to_double(tokens[2], p[1]) || !to_double(tokens[3], p[2])) {
                throw ParseError(line_no, "expected \"v x y z\"");
            }
            builder.add_vertex(p);
        } else if (tokens[0] == "f") {
            if (tokens.size() != 4) {
                throw ParseError(line_no, "non-triangle face with " + std::to_string(tokens.size() - 1) + " vertices");
            }
            std::array<long long, 3> idx{};
            for (int k = 0; k < 3; ++k) {
                // "i", "i/t", "i//n", "i/t/n": only the position index matters.
                const std::string head = tokens[k + 1].substr(0, tokens[k + 1].find('/'));
                if (!to_long(head, idx[k]) || idx[k] == 0) throw ParseError(line_no, "malformed face index");
                // Negative indices are relative to the vertices read so far.
                if (idx[k] < 0) idx[k] += static_cast<long long>(builder.raw_vertex_count()) + 1;
                if (idx[k] < 1 || static_cast<std::size_t>(idx[k]) > builder.raw_vertex_count()) {
                    throw ParseError(line_no, "vertex index " + tokens[k + 1] + " out of range");
                }
            }
            if (idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2]) {
                throw ParseError(line_no, "face repeats a vertex index");
            }
            pending.push_back(idx);
        }
    }
    for (const auto& f : pending) {
        builder.add_face({static_cast<std::size_t>(f[0] - 1), static_cast<std::size_t>(f[1] - 1),
                          static_cast<std::size_t>(f[2] - 1)});
    }
    return builder.build();
}

EmbeddedComplex read_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file " + path.string());
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return parse_obj(in);
    return parse_off(in);
}

void write_off(const EmbeddedComplex& complex, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write mesh file " + path.string());
    emit_off(complex, out);
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace ectnet
