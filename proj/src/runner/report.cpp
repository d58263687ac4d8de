#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "image/draw.hpp"
#include "runner/runner.hpp"
#include "util/common.hpp"

namespace dreampast {

namespace {

// minimal raster line plot; fixed data ranges, light gridlines, one
// polyline per series (y range 0..1 suits the IoU metrics)
class Plot {
  public:
    Plot(int w, int h, double x0, double x1, double y0, double y1)
        : img_(h, w), x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
        img_.px.setOnes();
        for (double gy = y0_; gy <= y1_ + 1e-9; gy += (y1_ - y0_) / 4.0)
            hline(py(gy), {0.88, 0.88, 0.88});
        frame();
    }

    void series(const std::vector<double>& xs, const std::vector<double>& ys, const Rgb& c) {
        for (size_t i = 0; i + 1 < xs.size(); ++i)
            line(px(xs[i]), py(ys[i]), px(xs[i + 1]), py(ys[i + 1]), c);
        for (size_t i = 0; i < xs.size(); ++i) dot(px(xs[i]), py(ys[i]), c);
    }

    void save(const fs::path& p) const { write_png_rgb(p, img_); }

  private:
    static constexpr int kMargin = 18;

    int px(double x) const {
        const double f = (x1_ > x0_) ? (x - x0_) / (x1_ - x0_) : 0.5;
        return kMargin + int(std::lround(f * (img_.w - 2 * kMargin - 1)));
    }
    int py(double y) const {
        const double f = (y1_ > y0_) ? (y - y0_) / (y1_ - y0_) : 0.5;
        return img_.h - 1 - kMargin - int(std::lround(f * (img_.h - 2 * kMargin - 1)));
    }

    void set(int x, int y, const Rgb& c) {
        if (x < 0 || y < 0 || x >= img_.w || y >= img_.h) return;
        img_.at(0, y, x) = c.r;
        img_.at(1, y, x) = c.g;
        img_.at(2, y, x) = c.b;
    }

    void hline(int y, const Rgb& c) {
        for (int x = kMargin; x < img_.w - kMargin; ++x) set(x, y, c);
    }

    void frame() {
        const Rgb dark{0.25, 0.25, 0.25};
        for (int x = kMargin; x < img_.w - kMargin; ++x) {
            set(x, kMargin, dark);
            set(x, img_.h - 1 - kMargin, dark);
        }
        for (int y = kMargin; y < img_.h - kMargin; ++y) {
            set(kMargin, y, dark);
            set(img_.w - 1 - kMargin, y, dark);
        }
    }

    void line(int xa, int ya, int xb, int yb, const Rgb& c) {
        const int steps = std::max(std::abs(xb - xa), std::abs(yb - ya));
        for (int s = 0; s <= steps; ++s) {
            const double f = steps == 0 ? 0.0 : double(s) / steps;
            set(int(std::lround(xa + f * (xb - xa))), int(std::lround(ya + f * (yb - ya))), c);
        }
    }

    void dot(int x, int y, const Rgb& c) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) set(x + dx, y + dy, c);
    }

    Image img_;
    double x0_, x1_, y0_, y1_;
};

const Rgb kPalette[] = {{0.12, 0.47, 0.71}, {1.00, 0.50, 0.05}, {0.17, 0.63, 0.17},
                        {0.84, 0.15, 0.16}, {0.58, 0.40, 0.74}, {0.55, 0.34, 0.29},
                        {0.89, 0.47, 0.76}, {0.50, 0.50, 0.50}};

struct RunInfo {
    std::string name;
    json config = nullptr;
    std::vector<MetricsRecord> records;
};

// parse a metrics.jsonl payload; malformed lines are skipped and counted
std::vector<MetricsRecord> parse_metrics_lines(const std::string& text, int& warnings) {
    std::vector<MetricsRecord> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(MetricsRecord::from_json(json::parse(line)));
        } catch (const std::exception&) {
            ++warnings;
        }
    }
    return out;
}

std::optional<RunInfo> read_run(const fs::path& dir, int& warnings) {
    RunInfo info;
    info.name = dir.filename().string();
    if (fs::exists(dir / "metrics.jsonl")) {
        info.records = parse_metrics_lines(read_text(dir / "metrics.jsonl"), warnings);
    } else {
        // fall back to per-step files (e.g. an interrupted run)
        for (int t = 1;; ++t) {
            const fs::path p = dir / ("step_" + std::to_string(t)) / "metrics.jsonl";
            if (!fs::exists(p)) break;
            auto recs = parse_metrics_lines(read_text(p), warnings);
            info.records.insert(info.records.end(), recs.begin(), recs.end());
        }
    }
    if (info.records.empty()) return std::nullopt;
    if (fs::exists(dir / "config.json")) {
        try {
            info.config = load_json(dir / "config.json");
        } catch (const std::exception&) {
            ++warnings;
        }
    }
    std::sort(info.records.begin(), info.records.end(),
              [](const MetricsRecord& a, const MetricsRecord& b) { return a.step < b.step; });
    return info;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

json cmd_report(const fs::path& dir, fs::path out_dir) {
    if (!fs::exists(dir)) throw RuntimeError("no such directory: " + dir.string());
    int warnings = 0;
    std::vector<RunInfo> runs;
    if (auto r = read_run(dir, warnings)) {
        runs.push_back(std::move(*r));
    } else {
        std::vector<fs::path> children;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_directory()) children.push_back(e.path());
        std::sort(children.begin(), children.end());
        for (const auto& c : children)
            if (auto r = read_run(c, warnings)) runs.push_back(std::move(*r));
    }
    if (runs.empty()) throw RuntimeError("no run metrics found under " + dir.string());

    if (out_dir.empty()) out_dir = dir / "report";
    fs::create_directories(out_dir);
    json outputs = json::array();

    // per-step evolution table + plot of miou_all
    std::string csv = "run,step,miou_base,miou_novel,miou_all,hiou\n";
    int max_step = 1;
    for (const auto& r : runs)
        for (const auto& m : r.records) {
            csv += r.name + "," + std::to_string(m.step) + "," + num(m.miou_base) + "," +
                   num(m.miou_novel) + "," + num(m.miou_all) + "," + num(m.hiou) + "\n";
            max_step = std::max(max_step, m.step);
        }
    write_file(out_dir / "evolution.csv", csv);
    outputs.push_back("evolution.csv");

    Plot evo(480, 320, 1.0, double(std::max(2, max_step)), 0.0, 1.0);
    for (size_t i = 0; i < runs.size(); ++i) {
        std::vector<double> xs, ys;
        for (const auto& m : runs[i].records) {
            xs.push_back(double(m.step));
            ys.push_back(m.miou_all);
        }
        evo.series(xs, ys, kPalette[i % (sizeof kPalette / sizeof kPalette[0])]);
    }
    evo.save(out_dir / "evolution.png");
    outputs.push_back("evolution.png");

    // replay-budget sweep over the final-step miou_all, when the scanned
    // runs differ in their replay budget
    std::map<int, std::vector<double>> by_budget;
    for (const auto& r : runs) {
        if (!r.config.is_object()) continue;
        if (!r.config.contains("replay") || !r.config["replay"].contains("total")) continue;
        by_budget[r.config["replay"]["total"].get<int>()].push_back(r.records.back().miou_all);
    }
    if (by_budget.size() >= 2) {
        std::string sweep = "replay_total,n_runs,mean_final_miou_all,std_final_miou_all\n";
        std::vector<double> xs, ys;
        for (const auto& [total, vals] : by_budget) {
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= double(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            const double sd = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0.0;
            sweep += std::to_string(total) + "," + std::to_string(vals.size()) + "," + num(mean) +
                     "," + num(sd) + "\n";
            xs.push_back(double(total));
            ys.push_back(mean);
        }
        write_file(out_dir / "sweep.csv", sweep);
        outputs.push_back("sweep.csv");
        Plot sp(480, 320, xs.front(), xs.back(), 0.0, 1.0);
        sp.series(xs, ys, kPalette[0]);
        sp.save(out_dir / "sweep.png");
        outputs.push_back("sweep.png");
    }

    json run_names = json::array();
    for (const auto& r : runs) run_names.push_back(r.name);
    return json{{"out_dir", out_dir.string()},
                {"runs", run_names},
                {"warnings", warnings},
                {"outputs", outputs}};
}

}  // namespace dreampast
