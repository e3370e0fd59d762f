#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vigil/model.hpp"
#include "vigil/series.hpp"

namespace vigil {

// Versioned binary model file: magic "VGCK", format version, then a
// name-indexed list of (name, shape, little-endian f32 payload) entries.
// Model parameters use their canonical ModelParams::named() names; config,
// window spec, scaler and channel schema ride along as meta entries. A
// plain-text manifest (config values, seed, loss trace) is written beside
// the binary at `<path>.manifest`.

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

// Raw entry list, file order. Throws on bad magic, unsupported version,
// truncation or duplicate names.
std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path);

struct LoadedModel {
    std::unique_ptr<Model> model;
    std::vector<std::string> channel_names;  // frame order expected at scoring time
    std::vector<ChannelRole> roles;
};

// `channel_names`/`roles` describe the frame layout the model was built
// for; a trained model's scaler must agree with them.
void save_checkpoint(const std::string& path, const Model& model,
                     const std::vector<std::string>& channel_names,
                     const std::vector<ChannelRole>& roles);

LoadedModel load_checkpoint(const std::string& path);

}  // namespace vigil
