#pragma once

#include <iosfwd>
#include <string>

#include "gsconv/tensor.hpp"

namespace gsconv {

// GSV1 volume container: 8-byte magic "GSVOL1\0\0", a 4-byte little-endian
// header length, a JSON header {"dims":[N,D,H,W,C],"dtype":"f32"|"f64"},
// then the raw little-endian buffer in the library's element order.
enum class GsvDtype { F32, F64 };

void write_gsv(std::ostream& out, const VolumeTensor& tensor, GsvDtype dtype = GsvDtype::F64);
void write_gsv(const std::string& path, const VolumeTensor& tensor,
               GsvDtype dtype = GsvDtype::F64);
VolumeTensor read_gsv(std::istream& in, const std::string& context = "<stream>");
VolumeTensor read_gsv(const std::string& path);

}  // namespace gsconv
