#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfcn/tensor.hpp"

namespace rfcn {

/// A video clip: grayscale frames (1xHxW in [0,1]) with per-frame binary
/// masks (HxW). Immutable after construction.
struct FrameSequence {
    std::string id;
    std::vector<Tensor> frames;
    std::vector<Tensor> masks;

    int length() const { return static_cast<int>(frames.size()); }
    void validate() const;
};

struct MovingSpriteConfig {
    int canvas_h = 64;
    int canvas_w = 64;
    int length = 20;       // frames per sequence
    int sprite_count = 2;
    int vel_min = 1;       // per-axis speed range, pixels/frame
    int vel_max = 2;
    std::string glyph_source;  // empty => procedural glyphs, else IDX file
    int glyph_min = 10;        // procedural glyph size range, pixels
    int glyph_max = 14;
    double tau = 0.5;          // label threshold
    std::uint64_t seed = 0;
    // Optional per-frame salt noise applied after labels are extracted, so a
    // single frame no longer separates foreground by thresholding alone.
    double noise_salt_prob = 0.0;
    double noise_salt_min = 0.6;
    // Optional transient distractors: sprite-like glyphs flashed into a
    // single frame each, after labels are extracted. Spatially they look
    // like objects; only temporal context tells them apart.
    double transient_prob = 0.0;  // per-frame probability of one flash
    int transient_min = 8;
    int transient_max = 12;
};

/// Sprites take a random start and a constant integer velocity, reflect off
/// canvas edges, and composite by per-pixel max. Masks come from
/// threshold_labels on the clean composite.
FrameSequence synthesize_moving_sprites(const MovingSpriteConfig& cfg);

/// mask = 1 where pixel > tau. Accepts HxW or 1xHxW; returns HxW.
Tensor threshold_labels(const Tensor& frame, double tau = 0.5);

/// Directory layout: frames/NNNN.(pgm|png) + masks/NNNN.(pgm|png) with
/// matching sorted stems. Frames normalized to [0,1], masks binarized at 0.5.
FrameSequence load_sequence_dir(const std::filesystem::path& dir);

/// All seq_* (or otherwise named) subdirectories containing frames/, sorted.
std::vector<FrameSequence> load_dataset_dir(const std::filesystem::path& dir);

void write_sequence_dir(const std::filesystem::path& dir, const FrameSequence& seq,
                        const std::string& ext = "pgm");

enum class SplitPolicy { HalfPerSequence, SeventyThirtyBySequence };

SplitPolicy split_policy_from_string(const std::string& s);
std::string to_string(SplitPolicy p);

struct DatasetSplit {
    std::vector<FrameSequence> train;
    std::vector<FrameSequence> test;
    SplitPolicy policy = SplitPolicy::HalfPerSequence;
};

/// half_per_sequence: first ceil(T/2) frames of every sequence train, the
/// rest test (windows never straddle the cut). seventy_thirty_by_sequence:
/// seeded shuffle of whole sequences, first floor(0.7*N) to train.
DatasetSplit split(const std::vector<FrameSequence>& sequences, SplitPolicy policy,
                   std::uint64_t seed);

/// Stride-1 window of L frames whose target is the last frame's mask.
struct Window {
    const FrameSequence* seq = nullptr;
    int begin = 0;
    int len = 0;

    const Tensor& frame(int i) const { return seq->frames[static_cast<size_t>(begin + i)]; }
    const Tensor& target() const { return seq->masks[static_cast<size_t>(begin + len - 1)]; }
    int last_index() const { return begin + len - 1; }
};

std::vector<Window> sliding_windows(const FrameSequence& seq, int L);
std::vector<Window> sliding_windows(const std::vector<FrameSequence>& seqs, int L);

/// Area-averaged resample to oh x ow (used to adapt data to a fixed-input
/// model). Accepts HxW or 1xHxW and preserves the rank.
Tensor resize_area(const Tensor& t, int oh, int ow);

}  // namespace rfcn
