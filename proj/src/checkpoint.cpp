#include "maelab/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace maelab {

namespace {
constexpr char kMagic[8] = {'M', 'A', 'E', 'L', 'A', 'B', '0', '1'};
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void Checkpoint::put(const std::string& name, const Tensor& t) {
    auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                               [](const auto& a, const std::string& n) { return a.first < n; });
    if (it != tensors.end() && it->first == name)
        throw std::logic_error("Checkpoint: duplicate tensor " + name);
    tensors.insert(it, {name, t.detach()});
}

const Tensor* Checkpoint::find(const std::string& name) const {
    auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                               [](const auto& a, const std::string& n) { return a.first < n; });
    if (it == tensors.end() || it->first != name) return nullptr;
    return &it->second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json meta;
    meta["format_version"] = ckpt.format_version;
    meta["step"] = ckpt.step;
    meta["config"] = ckpt.config_text;
    std::ostringstream hash;
    hash << std::hex << fnv1a64(ckpt.config_text);
    meta["config_hash"] = hash.str();

    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;  // in floats
    for (const auto& [name, t] : ckpt.tensors) {
        entries.push_back({{"name", name},
                           {"shape", t.shape()},
                           {"dtype", "f32"},
                           {"offset", offset},
                           {"numel", t.numel()}});
        offset += t.numel();
    }
    meta["tensors"] = entries;

    const std::string header = meta.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    const std::uint64_t header_len = header.size();
    out.write(reinterpret_cast<const char*>(&header_len), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : ckpt.tensors)
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    std::uint64_t header_len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);

    nlohmann::json meta = nlohmann::json::parse(header);
    Checkpoint ckpt;
    ckpt.format_version = meta.at("format_version").get<int>();
    ckpt.step = meta.at("step").get<std::uint64_t>();
    ckpt.config_text = meta.at("config").get<std::string>();

    for (const auto& e : meta.at("tensors")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        const auto numel = e.at("numel").get<std::uint64_t>();
        if (e.at("dtype").get<std::string>() != "f32")
            throw std::runtime_error("load_checkpoint: unsupported dtype for " + name);
        std::vector<float> data(numel);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated payload at " + name);
        ckpt.tensors.emplace_back(name, Tensor::from_data(shape, std::move(data)));
    }
    return ckpt;
}

std::vector<std::string> load_into_store(const Checkpoint& ckpt, ParamStore& store) {
    std::vector<std::string> missing;
    std::vector<std::string> mismatched;
    for (const auto& name : store.names()) {
        const Tensor* src = ckpt.find(name);
        if (!src) {
            missing.push_back(name);
            continue;
        }
        Tensor& dst = store.at(name);
        if (src->shape() != dst.shape()) {
            mismatched.push_back(name + ": checkpoint " + shape_str(src->shape()) + " vs model " +
                                 shape_str(dst.shape()));
            continue;
        }
        dst.mutable_data() = src->data();
    }
    if (!mismatched.empty()) {
        std::string msg = "load_into_store: shape mismatch on " +
                          std::to_string(mismatched.size()) + " tensor(s):";
        for (const auto& m : mismatched) msg += "\n  " + m;
        throw std::runtime_error(msg);
    }
    return missing;
}

}  // namespace maelab
