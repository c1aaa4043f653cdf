#include "rfcn/data.hpp"

#include <algorithm>
#include <cmath>

#include "rfcn/error.hpp"
#include "rfcn/image_io.hpp"
#include "rfcn/rng.hpp"

namespace rfcn {

namespace fs = std::filesystem;

void FrameSequence::validate() const {
    if (frames.empty() || frames.size() != masks.size()) {
        throw ArgumentError("sequence " + id + ": frames/masks count mismatch (" +
                            std::to_string(frames.size()) + " vs " + std::to_string(masks.size()) +
                            ")");
    }
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].shape() != frames[0].shape()) {
            throw DimensionError("sequence " + id + ": frame " + std::to_string(i) +
                                 " shape differs");
        }
        if (masks[i].rank() != 2 || masks[i].extent(0) != frames[i].extent(1) ||
            masks[i].extent(1) != frames[i].extent(2)) {
            throw DimensionError("sequence " + id + ": mask " + std::to_string(i) +
                                 " shape " + masks[i].shape_str() + " does not match frame " +
                                 frames[i].shape_str());
        }
        for (std::int64_t j = 0; j < masks[i].size(); ++j) {
            if (masks[i][j] != 0.0 && masks[i][j] != 1.0) {
                throw ArgumentError("sequence " + id + ": mask " + std::to_string(i) +
                                    " is not binary");
            }
        }
    }
}

Tensor threshold_labels(const Tensor& frame, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw ArgumentError("threshold_labels: tau must lie in (0,1)");
    const int h = frame.extent(frame.rank() - 2);
    const int w = frame.extent(frame.rank() - 1);
    Tensor mask({h, w});
    for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = frame[i] > tau ? 1.0 : 0.0;
    return mask;
}

namespace {

// Procedural glyphs: anti-aliased discs, bars, and crosses.
Tensor procedural_glyph(Rng& rng, int size_min, int size_max) {
    const int size = rng.uniform_int(size_min, size_max);
    const int kind = rng.uniform_int(0, 2);
    Tensor g({size, size});
    const double c = (size - 1) / 2.0;
    auto soft = [](double inside) { return std::min(1.0, std::max(0.0, inside)); };
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            if (kind == 0) {  // disc
                const double r = size / 2.0 - 0.5;
                const double d = std::hypot(y - c, x - c);
                v = soft(r - d + 0.5);
            } else if (kind == 1) {  // bar
                const double half = size / 5.0;
                v = soft(half - std::abs(y - c) + 0.5);
            } else {  // cross
                const double half = size / 6.0;
                v = std::max(soft(half - std::abs(y - c) + 0.5),
                             soft(half - std::abs(x - c) + 0.5));
            }
            g.at(y, x) = v;
        }
    }
    return g;
}

struct Sprite {
    Tensor glyph;  // HxW alpha in [0,1]
    int y, x;      // top-left position
    int vy, vx;    // integer velocity, pixels/frame
};

void reflect(int& p, int& v, int max_p) {
    p += v;
    while (p < 0 || p > max_p) {
        if (p < 0) {
            p = -p;
            v = -v;
        } else {
            p = 2 * max_p - p;
            v = -v;
        }
        if (max_p == 0) {
            p = 0;
            break;
        }
    }
}

}  // namespace

FrameSequence synthesize_moving_sprites(const MovingSpriteConfig& cfg) {
    if (cfg.length < 1) throw ArgumentError("synthesize_moving_sprites: length must be >= 1");
    if (cfg.sprite_count < 1) throw ArgumentError("synthesize_moving_sprites: need >= 1 sprite");
    if (cfg.vel_min < 0 || cfg.vel_max < cfg.vel_min) {
        throw ArgumentError("synthesize_moving_sprites: bad velocity range");
    }
    if (cfg.vel_max >= cfg.canvas_h || cfg.vel_max >= cfg.canvas_w) {
        throw ArgumentError("synthesize_moving_sprites: velocity exceeds canvas extents");
    }
    if (cfg.glyph_min < 3 || cfg.glyph_max < cfg.glyph_min) {
        throw ArgumentError("synthesize_moving_sprites: bad glyph size range");
    }
    Rng rng(cfg.seed);
    std::vector<Tensor> glyph_pool;
    if (!cfg.glyph_source.empty()) {
        glyph_pool = read_idx_images(cfg.glyph_source, 256);
    }

    std::vector<Sprite> sprites;
    for (int s = 0; s < cfg.sprite_count; ++s) {
        Sprite sp;
        sp.glyph = glyph_pool.empty()
                       ? procedural_glyph(rng, cfg.glyph_min, cfg.glyph_max)
                       : glyph_pool[static_cast<size_t>(
                             rng.uniform_int(0, static_cast<int>(glyph_pool.size()) - 1))];
        const int gh = sp.glyph.extent(0), gw = sp.glyph.extent(1);
        if (gh > cfg.canvas_h || gw > cfg.canvas_w) {
            throw ArgumentError("synthesize_moving_sprites: sprite " + std::to_string(gh) + "x" +
                                std::to_string(gw) + " larger than canvas");
        }
        sp.y = rng.uniform_int(0, cfg.canvas_h - gh);
        sp.x = rng.uniform_int(0, cfg.canvas_w - gw);
        auto draw_vel = [&]() {
            int mag = rng.uniform_int(cfg.vel_min, cfg.vel_max);
            return rng.uniform_int(0, 1) == 0 ? mag : -mag;
        };
        sp.vy = draw_vel();
        sp.vx = draw_vel();
        sprites.push_back(std::move(sp));
    }

    FrameSequence seq;
    seq.id = "synth_" + std::to_string(cfg.seed);
    for (int t = 0; t < cfg.length; ++t) {
        Tensor frame({1, cfg.canvas_h, cfg.canvas_w});
        for (const Sprite& sp : sprites) {
            const int gh = sp.glyph.extent(0), gw = sp.glyph.extent(1);
            for (int y = 0; y < gh; ++y) {
                for (int x = 0; x < gw; ++x) {
                    double& px = frame.at(0, sp.y + y, sp.x + x);
                    px = std::max(px, sp.glyph.at(y, x));
                }
            }
        }
        seq.masks.push_back(threshold_labels(frame, cfg.tau));
        if (cfg.noise_salt_prob > 0.0) {
            for (std::int64_t i = 0; i < frame.size(); ++i) {
                if (rng.uniform() < cfg.noise_salt_prob) {
                    frame[i] = std::max(frame[i], rng.uniform(cfg.noise_salt_min, 1.0));
                }
            }
        }
        if (cfg.transient_prob > 0.0 && rng.uniform() < cfg.transient_prob) {
            Tensor flash = procedural_glyph(rng, cfg.transient_min, cfg.transient_max);
            const int fh = flash.extent(0), fw = flash.extent(1);
            if (fh <= cfg.canvas_h && fw <= cfg.canvas_w) {
                const int fy = rng.uniform_int(0, cfg.canvas_h - fh);
                const int fx = rng.uniform_int(0, cfg.canvas_w - fw);
                for (int y = 0; y < fh; ++y) {
                    for (int x = 0; x < fw; ++x) {
                        double& px = frame.at(0, fy + y, fx + x);
                        px = std::max(px, flash.at(y, x));
                    }
                }
            }
        }
        seq.frames.push_back(std::move(frame));
        for (Sprite& sp : sprites) {
            reflect(sp.y, sp.vy, cfg.canvas_h - sp.glyph.extent(0));
            reflect(sp.x, sp.vx, cfg.canvas_w - sp.glyph.extent(1));
        }
    }
    seq.validate();
    return seq;
}

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw LoadError("missing directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

FrameSequence load_sequence_dir(const fs::path& dir) {
    const auto frame_files = sorted_files(dir / "frames");
    const auto mask_files = sorted_files(dir / "masks");
    FrameSequence seq;
    seq.id = dir.filename().string();
    size_t fi = 0, mi = 0;
    while (fi < frame_files.size() || mi < mask_files.size()) {
        const std::string fstem = fi < frame_files.size() ? frame_files[fi].stem().string() : "";
        const std::string mstem = mi < mask_files.size() ? mask_files[mi].stem().string() : "";
        if (fi >= frame_files.size() || (mi < mask_files.size() && mstem < fstem)) {
            throw LoadError("missing frame for masks/" + mstem + " in " + dir.string());
        }
        if (mi >= mask_files.size() || (fi < frame_files.size() && fstem < mstem)) {
            throw LoadError("missing mask for frames/" + fstem + " in " + dir.string());
        }
        Tensor frame = image_to_tensor(read_gray_image(frame_files[fi]));
        Tensor mask_gray = image_to_tensor(read_gray_image(mask_files[mi]));
        if (frame.shape() != mask_gray.shape()) {
            throw LoadError("shape mismatch between frames/" + fstem + " and masks/" + mstem +
                            " in " + dir.string());
        }
        seq.frames.push_back(std::move(frame));
        seq.masks.push_back(threshold_labels(mask_gray, 0.5));
        ++fi;
        ++mi;
    }
    if (seq.frames.empty()) throw LoadError("empty sequence directory: " + dir.string());
    seq.validate();
    return seq;
}

std::vector<FrameSequence> load_dataset_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw LoadError("missing dataset directory: " + dir.string());
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && fs::is_directory(e.path() / "frames")) subdirs.push_back(e.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    if (subdirs.empty()) {
        // Allow pointing directly at a single sequence directory.
        if (fs::is_directory(dir / "frames")) return {load_sequence_dir(dir)};
        throw LoadError("no sequence directories under " + dir.string());
    }
    std::vector<FrameSequence> out;
    for (const auto& d : subdirs) out.push_back(load_sequence_dir(d));
    return out;
}

void write_sequence_dir(const fs::path& dir, const FrameSequence& seq, const std::string& ext) {
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "masks");
    char name[16];
    for (int i = 0; i < seq.length(); ++i) {
        std::snprintf(name, sizeof(name), "%04d.%s", i, ext.c_str());
        write_gray_image(dir / "frames" / name, tensor_to_image(seq.frames[static_cast<size_t>(i)]));
        write_gray_image(dir / "masks" / name, tensor_to_image(seq.masks[static_cast<size_t>(i)]));
    }
}

SplitPolicy split_policy_from_string(const std::string& s) {
    if (s == "half" || s == "half_per_sequence") return SplitPolicy::HalfPerSequence;
    if (s == "70/30" || s == "seventy_thirty" || s == "seventy_thirty_by_sequence") {
        return SplitPolicy::SeventyThirtyBySequence;
    }
    throw ArgumentError("unknown split policy '" + s + "' (expected half or 70/30)");
}

std::string to_string(SplitPolicy p) {
    return p == SplitPolicy::HalfPerSequence ? "half_per_sequence" : "seventy_thirty_by_sequence";
}

DatasetSplit split(const std::vector<FrameSequence>& sequences, SplitPolicy policy,
                   std::uint64_t seed) {
    if (sequences.empty()) throw ArgumentError("split: no sequences");
    DatasetSplit out;
    out.policy = policy;
    if (policy == SplitPolicy::HalfPerSequence) {
        for (const FrameSequence& s : sequences) {
            const int T = s.length();
            if (T < 2) {
                throw ArgumentError("split: sequence " + s.id +
                                    " too short for the half policy (length " + std::to_string(T) +
                                    ")");
            }
            const int cut = (T + 1) / 2;  // first ceil(T/2) frames train
            FrameSequence tr, te;
            tr.id = s.id + "/train";
            te.id = s.id + "/test";
            tr.frames.assign(s.frames.begin(), s.frames.begin() + cut);
            tr.masks.assign(s.masks.begin(), s.masks.begin() + cut);
            te.frames.assign(s.frames.begin() + cut, s.frames.end());
            te.masks.assign(s.masks.begin() + cut, s.masks.end());
            out.train.push_back(std::move(tr));
            out.test.push_back(std::move(te));
        }
    } else {
        std::vector<int> order(sequences.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng rng(Rng::derive_seed(seed, "split"));
        rng.shuffle(order);
        const size_t n_train = sequences.size() * 7 / 10;
        for (size_t i = 0; i < order.size(); ++i) {
            const FrameSequence& s = sequences[static_cast<size_t>(order[i])];
            (i < n_train ? out.train : out.test).push_back(s);
        }
    }
    return out;
}

std::vector<Window> sliding_windows(const FrameSequence& seq, int L) {
    if (L < 1) throw ArgumentError("sliding_windows: L must be >= 1");
    if (seq.length() < L) {
        throw ArgumentError("sliding_windows: sequence " + seq.id + " has " +
                            std::to_string(seq.length()) + " frames, shorter than L=" +
                            std::to_string(L));
    }
    std::vector<Window> out;
    for (int b = 0; b + L <= seq.length(); ++b) out.push_back({&seq, b, L});
    return out;
}

std::vector<Window> sliding_windows(const std::vector<FrameSequence>& seqs, int L) {
    std::vector<Window> out;
    for (const FrameSequence& s : seqs) {
        auto w = sliding_windows(s, L);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

Tensor resize_area(const Tensor& t, int oh, int ow) {
    if (oh < 1 || ow < 1) throw ArgumentError("resize_area: non-positive target");
    const bool chan = t.rank() == 3;
    if (!chan && t.rank() != 2) {
        throw DimensionError("resize_area: expected HxW or 1xHxW, got " + t.shape_str());
    }
    if (chan && t.extent(0) != 1) {
        throw DimensionError("resize_area: expected a single channel, got " + t.shape_str());
    }
    const int h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
    Tensor out(chan ? Shape{1, oh, ow} : Shape{oh, ow});
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
    for (int oy = 0; oy < oh; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        for (int ox = 0; ox < ow; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            double acc = 0.0;
            for (int iy = static_cast<int>(y0); iy < h && iy < y1; ++iy) {
                const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                for (int ix = static_cast<int>(x0); ix < w && ix < x1; ++ix) {
                    const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                    acc += wy * wx * t[(static_cast<std::int64_t>(iy)) * w + ix];
                }
            }
            out[(static_cast<std::int64_t>(oy)) * ow + ox] = acc / (sy * sx);
        }
    }
    return out;
}

}  // namespace rfcn
