#include "maelab/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace maelab {

namespace {

std::string sidecar_path(const std::string& csv_path) {
    fs::path p(csv_path);
    p.replace_extension("");
    return p.string() + ".boxes.json";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    return out;
}

}  // namespace

void save_manifest(const std::string& csv_path, const DatasetManifest& manifest) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("save_manifest: cannot open " + csv_path);
    csv << "path";
    for (const auto& name : manifest.class_names) csv << ',' << name;
    csv << '\n';
    bool any_boxes = false;
    for (const auto& e : manifest.entries) {
        if (e.labels.size() != manifest.class_names.size())
            throw std::invalid_argument("save_manifest: label vector size mismatch for " + e.path);
        csv << e.path;
        for (int v : e.labels) csv << ',' << v;
        csv << '\n';
        any_boxes = any_boxes || !e.boxes.empty();
    }
    if (!csv) throw std::runtime_error("save_manifest: write failed for " + csv_path);

    if (any_boxes) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& e : manifest.entries) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& b : e.boxes)
                arr.push_back({{"class", b.cls},
                               {"x", b.box.x},
                               {"y", b.box.y},
                               {"w", b.box.w},
                               {"h", b.box.h}});
            j[e.path] = arr;
        }
        std::ofstream side(sidecar_path(csv_path));
        if (!side) throw std::runtime_error("save_manifest: cannot open box sidecar");
        side << j.dump(1) << '\n';
    }
}

DatasetManifest load_manifest(const std::string& csv_path) {
    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("load_manifest: cannot open " + csv_path);

    DatasetManifest m;
    std::string line;
    if (!std::getline(csv, line)) throw std::runtime_error("load_manifest: empty " + csv_path);
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "path")
        throw std::runtime_error("load_manifest: header must start with 'path' in " + csv_path);
    m.class_names.assign(header.begin() + 1, header.end());

    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error("load_manifest: row with " + std::to_string(fields.size()) +
                                     " fields, expected " + std::to_string(header.size()));
        ManifestEntry e;
        e.path = fields[0];
        for (std::size_t i = 1; i < fields.size(); ++i) e.labels.push_back(std::stoi(fields[i]));
        m.entries.push_back(std::move(e));
    }

    const std::string side = sidecar_path(csv_path);
    if (fs::exists(side)) {
        std::ifstream in(side);
        nlohmann::json j;
        in >> j;
        for (auto& e : m.entries) {
            auto it = j.find(e.path);
            if (it == j.end()) continue;
            for (const auto& jb : *it)
                e.boxes.push_back({jb.at("class").get<std::size_t>(),
                                   Box{jb.at("x").get<double>(), jb.at("y").get<double>(),
                                       jb.at("w").get<double>(), jb.at("h").get<double>()}});
        }
    }
    return m;
}

LoadedDataset load_dataset(const std::string& csv_path) {
    DatasetManifest m = load_manifest(csv_path);
    const fs::path base = fs::path(csv_path).parent_path();

    LoadedDataset d;
    d.class_names = m.class_names;
    for (const auto& e : m.entries) {
        fs::path p(e.path);
        if (p.is_relative()) p = base / p;
        d.images.push_back(load_png(p.string()));
        d.labels.push_back(e.labels);
        d.boxes.push_back(e.boxes);
    }
    return d;
}

LoadedDataset synthetic_dataset(const SyntheticSpec& spec, std::size_t count) {
    LoadedDataset d;
    for (std::size_t k = 0; k < spec.n_classes; ++k)
        d.class_names.push_back("label_" + std::to_string(k));
    for (std::size_t i = 0; i < count; ++i) {
        SyntheticSample s = generate_synthetic(spec, i);
        d.images.push_back(std::move(s.image));
        d.labels.push_back(std::move(s.labels));
        d.boxes.push_back(std::move(s.boxes));
    }
    return d;
}

DatasetManifest write_synthetic_dataset(const SyntheticSpec& spec, std::size_t count,
                                        const std::string& dir) {
    fs::create_directories(dir);
    DatasetManifest m;
    for (std::size_t k = 0; k < spec.n_classes; ++k)
        m.class_names.push_back("label_" + std::to_string(k));
    for (std::size_t i = 0; i < count; ++i) {
        SyntheticSample s = generate_synthetic(spec, i);
        std::ostringstream name;
        name << "img_" << std::setw(5) << std::setfill('0') << i << ".png";
        save_png((fs::path(dir) / name.str()).string(), s.image);
        m.entries.push_back({name.str(), std::move(s.labels), std::move(s.boxes)});
    }
    save_manifest((fs::path(dir) / "manifest.csv").string(), m);
    return m;
}

}  // namespace maelab
