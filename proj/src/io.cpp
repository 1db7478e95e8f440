#include "gsconv/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

namespace gsconv {

static_assert(std::endian::native == std::endian::little,
              "GSV1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'S', 'V', 'O', 'L', '1', '\0', '\0'};

}  // namespace

void write_gsv(std::ostream& out, const VolumeTensor& tensor, GsvDtype dtype) {
    nlohmann::json header;
    const Shape5& d = tensor.dims();
    header["dims"] = {d.n, d.d, d.h, d.w, d.c};
    header["dtype"] = dtype == GsvDtype::F32 ? "f32" : "f64";
    const std::string header_str = header.dump();

    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    if (dtype == GsvDtype::F64) {
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    } else {
        std::vector<float> buf(static_cast<std::size_t>(tensor.size()));
        for (index_t i = 0; i < tensor.size(); ++i)
            buf[static_cast<std::size_t>(i)] = static_cast<float>(tensor[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("GSV1 write failed");
}

void write_gsv(const std::string& path, const VolumeTensor& tensor, GsvDtype dtype) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_gsv(out, tensor, dtype);
    if (!out) throw IoError("short write to " + path);
}

VolumeTensor read_gsv(std::istream& in, const std::string& context) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError(context + ": not a GSV1 payload (bad magic)");

    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len == 0 || header_len > (1u << 20))
        throw IoError(context + ": corrupt header length");

    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw IoError(context + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(context + ": bad JSON header: " + e.what());
    }
    if (!header.contains("dims") || !header.contains("dtype") || header["dims"].size() != 5)
        throw IoError(context + ": header missing dims/dtype");

    Shape5 dims{header["dims"][0].get<index_t>(), header["dims"][1].get<index_t>(),
                header["dims"][2].get<index_t>(), header["dims"][3].get<index_t>(),
                header["dims"][4].get<index_t>()};
    dims.validate();
    const std::string dtype = header["dtype"].get<std::string>();

    VolumeTensor tensor(dims);
    if (dtype == "f64") {
        in.read(reinterpret_cast<char*>(tensor.data()),
                static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    } else if (dtype == "f32") {
        std::vector<float> buf(static_cast<std::size_t>(tensor.size()));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        for (index_t i = 0; i < tensor.size(); ++i)
            tensor[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
    } else {
        throw IoError(context + ": unknown dtype '" + dtype + "'");
    }
    if (!in) throw IoError(context + ": truncated data section");
    return tensor;
}

VolumeTensor read_gsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_gsv(in, path);
}

}  // namespace gsconv
