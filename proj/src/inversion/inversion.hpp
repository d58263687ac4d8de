#ifndef DREAMPAST_INVERSION_HPP
#define DREAMPAST_INVERSION_HPP

#include <map>

#include "diffusion/diffusion.hpp"

namespace dreampast {

struct TokenLearnConfig {
    int iters = 500;
    double lr = 5e-3;
    int few_shot = 4;

    static TokenLearnConfig from_json(const json& j);
    json to_json() const;
};

struct TokenResult {
    Vec token;
    double loss_first = 0.0, loss_last = 0.0;  // averages of the first/last 10% of iterations
};

// Learn a conditioning token for one class against the frozen denoiser.
// Only the token vector is optimized; denoiser gradients are discarded
// every iteration, so its weights stay bit-identical. The token starts
// from the class's base embedding and sees few-shot images without edge
// conditioning (matching how it is used at generation time).
TokenResult learn_token(UNet& net, const std::vector<const Image*>& shots, int class_id,
                        const Schedule& sched, const TokenLearnConfig& cfg, uint64_t seed);

// per-class learned tokens, persisted as a header+blob container inside
// the knowledge store
class TokenTable {
  public:
    TokenTable() = default;
    explicit TokenTable(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    bool has(int class_id) const { return tokens_.count(class_id) > 0; }
    const Vec& get(int class_id) const;
    int learned_at(int class_id) const;
    void set(int class_id, Vec token, int step);
    size_t size() const { return tokens_.size(); }
    std::vector<int> class_ids() const;

    void save(const fs::path& p) const;
    static TokenTable load(const fs::path& p);

  private:
    int dim_ = 0;
    std::map<int, Vec> tokens_;
    std::map<int, int> step_;
};

}  // namespace dreampast

#endif
