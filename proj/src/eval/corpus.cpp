#include "hstf/eval/corpus.hpp"

#include "hstf/features/sample_io.hpp"

namespace hstf::eval {

CorpusCounts write_synthetic_samples(const synth::CorpusSpec& spec, const features::FeatureConfig& shape,
                                     const std::filesystem::path& path) {
  CorpusCounts counts;
  features::BinarySampleWriter writer(path, shape);
  synth::for_each_flow(spec, [&](synth::Flow&& flow) {
    auto sample = features::flow_to_sample(flow, shape);
    if (!sample) {
      ++counts.discarded;
      return;
    }
    if (sample->label == features::Label::kMalicious) ++counts.malicious;
    else ++counts.benign;
    writer.append(*sample);
  });
  writer.close();
  return counts;
}

}  // namespace hstf::eval
