#include "sslseg/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "sslseg/data.hpp"

static_assert(std::endian::native == std::endian::little,
              "SSLCKPT1 readers/writers assume a little-endian host");

namespace sslseg {

namespace {
constexpr const char* kCkptMagic = "SSLCKPT1";

std::string shape_token(const Shape& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[static_cast<size_t>(i)]);
    }
    return out;
}

Shape parse_shape_token(const std::string& tok) {
    Shape s;
    std::istringstream is(tok);
    std::string piece;
    while (std::getline(is, piece, 'x')) s.push_back(std::stoi(piece));
    if (s.empty()) throw FormatError(FormatError::Kind::bad_header, "empty shape token");
    return s;
}
}  // namespace

void save_checkpoint(UNetF& model, const std::filesystem::path& path) {
    auto params = model.all_params();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + tmp.string());
        const auto& c = model.cfg;
        f << kCkptMagic << " depth=" << c.depth << " base=" << c.base_channels
          << " in=" << c.in_channels << " classes=" << c.num_classes
          << " gdim=" << c.global_embed_dim << " ldim=" << c.local_embed_dim
          << " head=" << head_mode_name(model.head_mode()) << " nparams=" << params.size() << "\n";
        for (const auto& p : params) f << p.name << " " << shape_token(p.tensor.shape()) << "\n";
        for (const auto& p : params)
            f.write(reinterpret_cast<const char*>(p.tensor.values().data()),
                    static_cast<std::streamsize>(sizeof(float) * p.tensor.numel()));
        if (!f) throw FormatError(FormatError::Kind::io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

UNetF load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    std::string header;
    if (!std::getline(f, header))
        throw FormatError(FormatError::Kind::truncated, "missing header in " + path.string());
    std::istringstream hs(header);
    std::string magic;
    hs >> magic;
    if (magic != kCkptMagic)
        throw FormatError(FormatError::Kind::bad_magic, "bad magic '" + magic + "' in " + path.string());

    UNetConfig cfg;
    std::string head = "none";
    size_t nparams = 0;
    std::string field;
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos)
            throw FormatError(FormatError::Kind::bad_header, "malformed header field: " + field);
        const std::string key = field.substr(0, eq);
        const std::string val = field.substr(eq + 1);
        if (key == "depth") cfg.depth = std::stoi(val);
        else if (key == "base") cfg.base_channels = std::stoi(val);
        else if (key == "in") cfg.in_channels = std::stoi(val);
        else if (key == "classes") cfg.num_classes = std::stoi(val);
        else if (key == "gdim") cfg.global_embed_dim = std::stoi(val);
        else if (key == "ldim") cfg.local_embed_dim = std::stoi(val);
        else if (key == "head") head = val;
        else if (key == "nparams") nparams = std::stoul(val);
    }

    UNetF model = UNetF::build(cfg, 0);
    model.swap_head(head_mode_from_name(head), 0);
    auto params = model.all_params();
    if (params.size() != nparams)
        throw FormatError(FormatError::Kind::dim_mismatch,
                          "checkpoint lists " + std::to_string(nparams) + " params, model has " +
                              std::to_string(params.size()));

    for (auto& p : params) {
        std::string line;
        if (!std::getline(f, line))
            throw FormatError(FormatError::Kind::truncated, "param table truncated in " + path.string());
        std::istringstream ls(line);
        std::string name, shape_tok;
        ls >> name >> shape_tok;
        if (name != p.name)
            throw FormatError(FormatError::Kind::dim_mismatch,
                              "checkpoint param '" + name + "' does not match model param '" +
                                  p.name + "'");
        const Shape s = parse_shape_token(shape_tok);
        if (s != p.tensor.shape())
            throw FormatError(FormatError::Kind::dim_mismatch,
                              "param " + name + ": checkpoint shape " + shape_str(s) +
                                  " vs model shape " + shape_str(p.tensor.shape()));
    }
    for (auto& p : params) {
        f.read(reinterpret_cast<char*>(p.tensor.values().data()),
               static_cast<std::streamsize>(sizeof(float) * p.tensor.numel()));
        if (f.gcount() != static_cast<std::streamsize>(sizeof(float) * p.tensor.numel()))
            throw FormatError(FormatError::Kind::truncated,
                              "payload truncated at param " + p.name + " in " + path.string());
    }
    char extra;
    if (f.read(&extra, 1); f.gcount() != 0)
        throw FormatError(FormatError::Kind::dim_mismatch,
                          "payload longer than declared in " + path.string());
    return model;
}

}  // namespace sslseg
