#pragma once

#include "maelab/synthetic.hpp"

namespace maelab {

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    std::vector<int> labels;
    std::vector<LabeledBox> boxes;
};

struct DatasetManifest {
    std::vector<std::string> class_names;  // CSV label column names
    std::vector<ManifestEntry> entries;
};

// CSV `path,label_0,...,label_{K-1}` (header first) plus a `<stem>.boxes.json`
// sidecar `{path: [{class,x,y,w,h}]}` when any entry carries boxes.
void save_manifest(const std::string& csv_path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& csv_path);

// In-memory dataset for the training engine.
struct LoadedDataset {
    std::vector<Image> images;
    std::vector<std::vector<int>> labels;
    std::vector<std::vector<LabeledBox>> boxes;
    std::vector<std::string> class_names;
    std::size_t n_classes() const { return class_names.size(); }
    std::size_t size() const { return images.size(); }
};

LoadedDataset load_dataset(const std::string& csv_path);
LoadedDataset synthetic_dataset(const SyntheticSpec& spec, std::size_t count);

// Materializes `count` synthetic samples as PNGs plus manifest.csv in dir.
DatasetManifest write_synthetic_dataset(const SyntheticSpec& spec, std::size_t count,
                                        const std::string& dir);

}  // namespace maelab
