#pragma once

#include <filesystem>

#include "hstf/features/extract.hpp"
#include "hstf/synth/generator.hpp"

namespace hstf::eval {

struct CorpusCounts {
  size_t malicious = 0;
  size_t benign = 0;
  size_t discarded = 0;
};

/// Generates a synthetic corpus flow by flow and streams the extracted
/// samples into a binary sample file; memory stays flat in corpus size.
CorpusCounts write_synthetic_samples(const synth::CorpusSpec& spec, const features::FeatureConfig& shape,
                                     const std::filesystem::path& path);

}  // namespace hstf::eval
