#pragma once

// mAP@0.5 with all-point (envelope) interpolation.

#include <aerosynth/dataset_io.hpp>
#include <aerosynth/errors.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace aerosynth {

struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double area() const { return (x_max - x_min) * (y_max - y_min); }
    bool valid() const {
        return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max) &&
               x_max > x_min && y_max > y_min;
    }
    auto tie() const { return std::tie(x_min, y_min, x_max, y_max); }
    friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw InputError("iou of a degenerate box");
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

struct Detection {
    std::uint64_t frame_id = 0;
    std::string cls;
    Box bbox;
    double confidence = 0;
};

struct GroundTruth {
    std::uint64_t frame_id = 0;
    std::string cls;
    Box bbox;
};

struct ClassAp {
    std::string cls;
    double ap = 0;
    std::size_t gt_count = 0;
    std::size_t detection_count = 0;
    std::size_t true_positives = 0;
};

struct MapResult {
    std::vector<ClassAp> per_class;  // in class-list order
    double map = 0;                  // mean over classes with GT
};

/// Area under the precision envelope given TP flags in ranked order.
inline double average_precision(const std::vector<bool>& tp_ranked, std::size_t gt_count) {
    if (gt_count == 0) return 0.0;
    const std::size_t n = tp_ranked.size();
    std::vector<double> precision(n), recall(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += tp_ranked[i];
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    }
    for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0, prev_recall = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

inline MapResult map50(std::span<const Detection> detections, std::span<const GroundTruth> ground_truth,
                       std::span<const std::string> classes, double iou_threshold = 0.5) {
    const std::set<std::string> known(classes.begin(), classes.end());
    for (const auto& d : detections) {
        if (!known.contains(d.cls)) throw InputError("detection class '" + d.cls + "' is not in the class list");
        if (!d.bbox.valid()) throw InputError(fmt::format("degenerate detection box in frame {}", d.frame_id));
        if (!(d.confidence >= 0 && d.confidence <= 1))
            throw InputError(fmt::format("confidence {} outside [0,1] in frame {}", d.confidence, d.frame_id));
    }
    for (const auto& g : ground_truth) {
        if (!known.contains(g.cls)) throw InputError("ground-truth class '" + g.cls + "' is not in the class list");
        if (!g.bbox.valid()) throw InputError(fmt::format("degenerate ground-truth box in frame {}", g.frame_id));
    }

    MapResult result;
    double sum = 0;
    std::size_t with_gt = 0;
    for (const auto& cls : classes) {
        std::map<std::uint64_t, std::vector<const GroundTruth*>> gt_by_frame;
        std::size_t gt_count = 0;
        for (const auto& g : ground_truth)
            if (g.cls == cls) {
                gt_by_frame[g.frame_id].push_back(&g);
                ++gt_count;
            }
        std::vector<const Detection*> ranked;
        for (const auto& d : detections)
            if (d.cls == cls) ranked.push_back(&d);
        std::sort(ranked.begin(), ranked.end(), [](const Detection* a, const Detection* b) {
            if (a->confidence != b->confidence) return a->confidence > b->confidence;
            if (a->frame_id != b->frame_id) return a->frame_id < b->frame_id;
            return a->bbox.tie() < b->bbox.tie();
        });

        std::map<const GroundTruth*, bool> matched;
        std::vector<bool> tp;
        tp.reserve(ranked.size());
        for (const Detection* d : ranked) {
            const GroundTruth* best = nullptr;
            double best_iou = -1;
            if (const auto it = gt_by_frame.find(d->frame_id); it != gt_by_frame.end())
                for (const GroundTruth* g : it->second) {
                    if (matched[g]) continue;
                    const double v = iou(d->bbox, g->bbox);
                    if (v >= iou_threshold && v > best_iou) {
                        best = g;
                        best_iou = v;
                    }
                }
            if (best) matched[best] = true;
            tp.push_back(best != nullptr);
        }

        ClassAp c{cls, average_precision(tp, gt_count), gt_count, ranked.size(),
                  static_cast<std::size_t>(std::count(tp.begin(), tp.end(), true))};
        if (gt_count > 0) {
            sum += c.ap;
            ++with_gt;
        }
        result.per_class.push_back(std::move(c));
    }
    result.map = with_gt ? sum / static_cast<double>(with_gt) : 0.0;
    return result;
}

// ---------------------------------------------------------------------------
// Loading

struct GroundTruthSet {
    std::vector<std::string> classes;
    std::vector<GroundTruth> boxes;
    std::set<std::uint64_t> frames;
};

/// Ground truth from a dataset directory, optionally restricted to a split.
inline GroundTruthSet load_ground_truth(const fs::path& dir, const std::string& only_split = {}) {
    const DatasetManifest m = load_manifest(dir);
    GroundTruthSet out;
    out.classes = m.classes;
    for (const auto& f : m.frames) {
        if (!only_split.empty() && f.split != only_split) continue;
        out.frames.insert(f.frame_id);
        for (const auto& l : parse_labels(read_text(dir / f.paths.label))) {
            if (l.class_index < 0 || static_cast<std::size_t>(l.class_index) >= m.classes.size())
                throw IntegrityError(fmt::format("{}: class index {} out of range", f.paths.label, l.class_index));
            const auto px = label_to_pixels(l, m.image_width, m.image_height);
            out.boxes.push_back({f.frame_id, m.classes[l.class_index], {px[0], px[1], px[2], px[3]}});
        }
    }
    return out;
}

inline void from_json(const nlohmann::json& j, Detection& d) {
    d.frame_id = j.at("frame_id").get<std::uint64_t>();
    d.cls = j.at("class").get<std::string>();
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw ParseError("detection bbox must be [x_min, y_min, x_max, y_max]");
    d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    d.confidence = j.at("confidence").get<double>();
}

inline void to_json(nlohmann::json& j, const Detection& d) {
    j = {{"frame_id", d.frame_id},
         {"class", d.cls},
         {"bbox", {d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max}},
         {"confidence", d.confidence}};
}

inline std::vector<Detection> load_detections(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path)).get<std::vector<Detection>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline MapResult evaluate_dataset(const GroundTruthSet& gt, std::span<const Detection> detections,
                                  double iou_threshold = 0.5) {
    for (const auto& d : detections)
        if (!gt.frames.contains(d.frame_id))
            throw InputError(fmt::format("detection refers to frame {} which has no ground truth entry", d.frame_id));
    return map50(detections, gt.boxes, gt.classes, iou_threshold);
}

inline std::string format_map_table(const MapResult& r) {
    std::string out = fmt::format("{:<18} {:>8} {:>8} {:>8}\n", "class", "gt", "dets", "AP50");
    for (const auto& c : r.per_class)
        out += c.gt_count ? fmt::format("{:<18} {:>8} {:>8} {:>8.4f}\n", c.cls, c.gt_count, c.detection_count, c.ap)
                          : fmt::format("{:<18} {:>8} {:>8} {:>8}\n", c.cls, 0, c.detection_count, "-");
    out += fmt::format("{:<18} {:>26.4f}\n", "mAP@0.5", r.map);
    return out;
}

}  // namespace aerosynth
