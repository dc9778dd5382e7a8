#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ectnet/complex.hpp"

namespace ectnet {

/// Reads an ASCII OFF triangle mesh. Exactly repeated vertices are merged and
/// repeated faces stored once; the result is face-closed.
/// Throws ParseError with the offending line number.
EmbeddedComplex parse_off(std::istream& in);
EmbeddedComplex parse_off(const std::string& text);

/// Writes vertices and 2-simplices as OFF with 17 significant digits.
/// Edges that bound no triangle and higher simplices are not representable.
void emit_off(const EmbeddedComplex& complex, std::ostream& out);
std::string emit_off(const EmbeddedComplex& complex);

/// Wavefront OBJ, `v` and `f` records only; other records are skipped.
EmbeddedComplex parse_obj(std::istream& in);

/// Dispatches on the extension (.off or .obj). Throws IoError if unreadable.
EmbeddedComplex read_mesh(const std::filesystem::path& path);
void write_off(const EmbeddedComplex& complex, const std::filesystem::path& path);

}  // namespace ectnet
