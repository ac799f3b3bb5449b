#include "msfm/pfm.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "msfm/errors.hpp"

namespace msfm {

namespace {

struct PfmHeader {
    int width = 0, height = 0;
    double scale = 0;
};

PfmHeader read_header(std::istream& in, const std::string& name) {
    std::string tag;
    in >> tag;
    if (tag != "PF") throw DataError("pfm: " + name + ": not a 3-channel PFM (tag '" + tag + "')");
    PfmHeader h;
    in >> h.width >> h.height >> h.scale;
    if (!in || h.width <= 0 || h.height <= 0)
        throw DataError("pfm: " + name + ": malformed header");
    if (h.scale >= 0) throw DataError("pfm: " + name + ": big-endian PFM not supported");
    in.get();  // single whitespace byte terminating the header
    return h;
}

}  // namespace

void write_pfm(const NormalMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("pfm: cannot write " + path.string());
    out << "PF\n" << map.width << " " << map.height << "\n-1.0\n";
    // bottom-up scanlines
    for (int y = map.height - 1; y >= 0; --y) {
        const char* row = reinterpret_cast<const char*>(&map.data[static_cast<size_t>(y) * map.width]);
        out.write(row, static_cast<std::streamsize>(map.width) * 3 * sizeof(float));
    }
    if (!out) throw DataError("pfm: write failed for " + path.string());
}

NormalMap read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("pfm: cannot open " + path.string());
    const PfmHeader h = read_header(in, path.string());
    NormalMap map = NormalMap::zeros(h.width, h.height);
    for (int y = h.height - 1; y >= 0; --y) {
        char* row = reinterpret_cast<char*>(&map.data[static_cast<size_t>(y) * h.width]);
        in.read(row, static_cast<std::streamsize>(h.width) * 3 * sizeof(float));
        if (!in) throw DataError("pfm: truncated pixel data in " + path.string());
    }
    return map;
}

std::pair<int, int> read_pfm_size(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("pfm: cannot open " + path.string());
    const PfmHeader h = read_header(in, path.string());
    return {h.width, h.height};
}

}  // namespace msfm
