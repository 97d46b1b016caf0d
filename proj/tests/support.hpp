#pragma once

#include "haicu/dataset.hpp"
#include "haicu/model.hpp"

#include <vector>

namespace haicu::testing {

inline GeneratorConfig three_class_generator(int scenes) {
    GeneratorConfig g;
    g.classes = {{"car", 4.0, 8.0, 0.6, 0.15, 1.0, 1.0},
                 {"pedestrian", 0.8, 1.8, 0.3, 0.6, 0.8, 1.0},
                 {"bicycle", 2.5, 5.0, 0.4, 0.35, 1.0, 1.0}};
    g.num_scenes = scenes;
    g.agents_min = 3;
    g.agents_max = 6;
    g.scene_length = 50;
    g.min_track_length = 25;
    g.arena_half_width = 15.0;
    return g;
}

inline PerceptionNoiseModel vague_noise(int k) {
    auto n = PerceptionNoiseModel::identity(k);
    n.concentration = 30.0;
    n.ambiguity_min = 0.3;
    n.ambiguity_max = 0.9;
    n.switch_rate = 0.02;
    return n;
}

inline std::vector<Scene> small_scenes(int scenes, std::uint64_t seed, bool one_hot = false) {
    auto g = three_class_generator(scenes);
    auto noise = one_hot ? PerceptionNoiseModel::identity(3) : vague_noise(3);
    return generate_synthetic(g, noise, seed);
}

inline ModelConfig tiny_config(Variant v = Variant::full_probs) {
    ModelConfig c;
    c.num_classes = 3;
    c.class_names = {"car", "pedestrian", "bicycle"};
    c.history = 8;
    c.horizon = 6;
    c.node_hidden = 8;
    c.edge_hidden = 4;
    c.future_hidden = 8;
    c.decoder_hidden = 16;
    c.latent_hidden = 8;
    c.latent = 4;
    c.variant = v;
    return c;
}

}  // namespace haicu::testing
