#include "ipga/serialize.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ipga {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'I', 'P', 'G', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

json dims_to_json(const Dims& d) {
    return json{{"img_h", d.img_h},   {"img_w", d.img_w},         {"patch", d.patch},
                {"d", d.d},           {"n_heads", d.n_heads},     {"n_queries", d.n_queries},
                {"enc_layers", d.enc_layers}, {"txt_layers", d.txt_layers},
                {"qf_layers", d.qf_layers},   {"mlp_mult", d.mlp_mult},
                {"max_text_len", d.max_text_len}};
}

Dims dims_from_json(const json& j) {
    Dims d;
    d.img_h = j.at("img_h");
    d.img_w = j.at("img_w");
    d.patch = j.at("patch");
    d.d = j.at("d");
    d.n_heads = j.at("n_heads");
    d.n_queries = j.at("n_queries");
    d.enc_layers = j.at("enc_layers");
    d.txt_layers = j.at("txt_layers");
    d.qf_layers = j.at("qf_layers");
    d.mlp_mult = j.at("mlp_mult");
    d.max_text_len = j.at("max_text_len");
    return d;
}

template <class S>
void write_raw(S& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

} // namespace

void save_bundle(const SurrogateBundle& b, const std::string& path,
                 const std::string& config_hash) {
    json sections = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : b.params) {
        sections.push_back({{"name", name}, {"rows", m.r}, {"cols", m.c}, {"offset", offset}});
        offset += m.size() * sizeof(double);
    }
    json header{{"kind", bundle_kind_name(b.kind)},
                {"dims", dims_to_json(b.dims)},
                {"vocab", b.vocab.tokens()},
                {"sections", sections},
                {"config_hash", config_hash},
                {"tool_version", kToolVersion}};
    std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_bundle: cannot open " + path);
    write_raw(os, kMagic, 4);
    std::uint32_t ver = kFormatVersion;
    write_raw(os, &ver, sizeof(ver));
    std::uint64_t hlen = hs.size();
    write_raw(os, &hlen, sizeof(hlen));
    write_raw(os, hs.data(), hs.size());
    for (const auto& [name, m] : b.params) {
        write_raw(os, m.v.data(), m.size() * sizeof(double));
    }
    if (!os) throw std::runtime_error("save_bundle: write failed for " + path);
}

namespace {

json read_header(std::ifstream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bundle file " + path + ": bad magic");
    std::uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (!is || ver != kFormatVersion)
        throw std::runtime_error("bundle file " + path + ": unsupported format version " +
                                 std::to_string(ver));
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!is || hlen == 0 || hlen > (1u << 26))
        throw std::runtime_error("bundle file " + path + ": corrupt header length");
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw std::runtime_error("bundle file " + path + ": truncated header");
    return json::parse(hs);
}

} // namespace

SurrogateBundle load_bundle(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_bundle: cannot open " + path);
    json header = read_header(is, path);

    SurrogateBundle b;
    b.kind = bundle_kind_from_name(header.at("kind"));
    b.dims = dims_from_json(header.at("dims"));
    b.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());

    std::streampos payload_start = is.tellg();
    for (const auto& s : header.at("sections")) {
        std::string name = s.at("name");
        int rows = s.at("rows");
        int cols = s.at("cols");
        std::uint64_t offset = s.at("offset");
        Mat<double> m(rows, cols);
        is.seekg(payload_start + static_cast<std::streamoff>(offset));
        is.read(reinterpret_cast<char*>(m.v.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!is) throw std::runtime_error("bundle file " + path + ": truncated section " + name);
        b.params.emplace(std::move(name), std::move(m));
    }
    return b;
}

BundleInfo peek_bundle(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("peek_bundle: cannot open " + path);
    json header = read_header(is, path);
    BundleInfo info;
    info.kind = bundle_kind_from_name(header.at("kind"));
    info.dims = dims_from_json(header.at("dims"));
    info.config_hash = header.value("config_hash", "");
    info.tool_version = header.value("tool_version", "");
    return info;
}

} // namespace ipga
