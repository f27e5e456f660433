#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace aape {

// ⟨layer, neuron⟩; ordered lexicographically.
struct NeuronId {
    std::uint32_t layer = 0;
    std::uint32_t neuron = 0;

    friend constexpr auto operator<=>(const NeuronId&, const NeuronId&) = default;

    std::string str() const {
        return "<" + std::to_string(layer) + "," + std::to_string(neuron) + ">";
    }
};

struct Geometry {
    std::uint32_t layers = 0;
    std::uint32_t neurons_per_layer = 0;

    friend constexpr bool operator==(const Geometry&, const Geometry&) = default;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(layers) * neurons_per_layer;
    }
    bool contains(NeuronId id) const noexcept {
        return id.layer < layers && id.neuron < neurons_per_layer;
    }
    std::size_t flat(NeuronId id) const noexcept {
        return static_cast<std::size_t>(id.layer) * neurons_per_layer + id.neuron;
    }
    NeuronId unflat(std::size_t i) const noexcept {
        return {static_cast<std::uint32_t>(i / neurons_per_layer),
                static_cast<std::uint32_t>(i % neurons_per_layer)};
    }
};

// Sorted, duplicate-free set of neuron ids.
using NeuronSet = std::vector<NeuronId>;

}  // namespace aape
