#include "inversion/inversion.hpp"

#include "util/common.hpp"

namespace dreampast {

TokenLearnConfig TokenLearnConfig::from_json(const json& j) {
    TokenLearnConfig c;
    c.iters = j.value("iters", c.iters);
    c.lr = j.value("lr", c.lr);
    c.few_shot = j.value("few_shot", c.few_shot);
    return c;
}

json TokenLearnConfig::to_json() const {
    return json{{"iters", iters}, {"lr", lr}, {"few_shot", few_shot}};
}

TokenResult learn_token(UNet& net, const std::vector<const Image*>& shots, int class_id,
                        const Schedule& sched, const TokenLearnConfig& cfg, uint64_t seed) {
    if (shots.empty()) throw RuntimeError("token learning needs at least one image");
    int h = shots[0]->h, w = shots[0]->w;
    size_t npx = size_t(h) * w;

    TokenResult out;
    out.token = net.class_embedding(class_id);
    Vec gtoken;
    ParamSet token_ps;
    token_ps.add("token", out.token, gtoken);

    Adam opt;
    opt.init(token_ps);
    Rng root = Rng(seed).fork("token", uint64_t(class_id));

    std::vector<double> losses;
    losses.reserve(cfg.iters);
    for (int iter = 0; iter < cfg.iters; ++iter) {
        Rng rit = root.fork("iter", uint64_t(iter));
        const Image* img = shots[rit.uniform_int(int(shots.size()))];
        int tau = rit.uniform_int(sched.steps());
        Mat eps(3, npx);
        rit.fill_normal(eps.data(), size_t(eps.size()));

        Mat xt = add_noise(img->px, sched.alpha_bar(tau), eps);
        Mat pred = net.forward(xt, h, w, nullptr, tau, -1, &out.token);
        Mat diff = pred - eps;
        losses.push_back(diff.squaredNorm() / double(diff.size()));

        net.backward(diff * (2.0 / double(diff.size())));
        gtoken += net.last_dcemb();
        opt.step(token_ps, cfg.lr);
        token_ps.zero_grad();
        net.params().zero_grad();  // the denoiser itself never takes a step
    }

    int win = std::max(1, cfg.iters / 10);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < win; ++i) {
        first += losses[i];
        last += losses[losses.size() - 1 - i];
    }
    out.loss_first = first / win;
    out.loss_last = last / win;
    return out;
}

const Vec& TokenTable::get(int class_id) const {
    auto it = tokens_.find(class_id);
    if (it == tokens_.end())
        throw RuntimeError("no token learned for class " + std::to_string(class_id));
    return it->second;
}

int TokenTable::learned_at(int class_id) const {
    auto it = step_.find(class_id);
    if (it == step_.end())
        throw RuntimeError("no token learned for class " + std::to_string(class_id));
    return it->second;
}

void TokenTable::set(int class_id, Vec token, int step) {
    if (dim_ == 0) dim_ = int(token.size());
    if (int(token.size()) != dim_) throw RuntimeError("token dimension mismatch");
    // round to storage precision right away, so a token behaves the same
    // whether it was just learned or reloaded from disk
    tokens_[class_id] = token.unaryExpr([](double v) { return double(float(v)); });
    step_[class_id] = step;
}

std::vector<int> TokenTable::class_ids() const {
    std::vector<int> out;
    for (const auto& [id, _] : tokens_) out.push_back(id);
    return out;
}

void TokenTable::save(const fs::path& p) const {
    json entries = json::array();
    for (const auto& [id, step] : step_) entries.push_back(json{{"class_id", id}, {"step", step}});
    CkptWriter wr("tokens", json{{"dim", dim_}, {"entries", entries}});
    for (const auto& [id, tok] : tokens_)
        wr.add("token_" + std::to_string(id), {int64_t(tok.size())}, tok.data(), size_t(tok.size()));
    wr.write(p);
}

TokenTable TokenTable::load(const fs::path& p) {
    CkptReader rd(p);
    if (rd.kind() != "tokens") throw RuntimeError("not a token table: " + p.string());
    TokenTable t(rd.meta().at("dim").get<int>());
    for (const auto& e : rd.meta().at("entries")) {
        int id = e.at("class_id").get<int>();
        int step = e.at("step").get<int>();
        Vec tok(t.dim_);
        rd.read("token_" + std::to_string(id), tok.data(), size_t(tok.size()));
        t.set(id, std::move(tok), step);
    }
    return t;
}

}  // namespace dreampast
