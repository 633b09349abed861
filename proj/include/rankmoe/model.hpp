#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rankmoe/config.hpp"
#include "rankmoe/heads.hpp"
#include "rankmoe/jd_encoder.hpp"
#include "rankmoe/moe.hpp"
#include "rankmoe/record.hpp"
#include "rankmoe/summary.hpp"
#include "rankmoe/text_embedding.hpp"
#include "rankmoe/vocab.hpp"

namespace rankmoe {

// The four ID vocabularies a trained model depends on. Saved next to the
// checkpoint so eval/serve map external ids to the same embedding rows that
// training used.
struct VocabSet {
    Vocabulary recruiter, query, talent, job;

    static VocabSet with_capacities(const Config& c) {
        VocabSet v;
        v.recruiter = Vocabulary("recruiter", c.gen.n_recruiters + 1);
        v.query = Vocabulary("query", c.gen.n_queries + 1);
        v.talent = Vocabulary("talent", c.gen.n_talents + 1);
        v.job = Vocabulary("job", c.gen.n_jobs + 1);
        return v;
    }

    void add_records(const std::vector<InteractionRecord>& recs) {
        for (const auto& r : recs) {
            recruiter.add(r.recruiter_id);
            query.add(r.query_id);
            talent.add(r.talent_id);
            if (!r.job_id.empty()) job.add(r.job_id);
            for (const auto& h : r.history_talent_ids) talent.add(h);
        }
    }

    void save_file(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw checkpoint_error("cannot write vocabulary file " + path);
        recruiter.save(out);
        query.save(out);
        talent.save(out);
        job.save(out);
        if (!out) throw checkpoint_error("failed writing vocabulary file " + path);
    }

    static VocabSet load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw checkpoint_error("cannot open vocabulary file " + path);
        VocabSet v;
        v.recruiter = Vocabulary::load(in);
        v.query = Vocabulary::load(in);
        v.talent = Vocabulary::load(in);
        v.job = Vocabulary::load(in);
        return v;
    }
};

struct Predictions {
    double p_ctr = 0.0;
    double p_cvr = 0.0;
    double p_relv = 0.0;
    double score = 0.0;  // p_ctr * p_cvr
};

// Multi-task core: shared experts, four gates, relevance/shared towers, and
// CTR/CVR towers with the relevance signal injected into their input streams.
template <typename T>
struct MtlCore {
    MoeBlock<T> moe;
    Mlp<T> tower_relv;
    Mlp<T> shared_tower;
    TaskTower<T> tower_ctr;
    TaskTower<T> tower_cvr;
    Head<T> head_ctr, head_cvr, head_relv;

    MtlCore(const TrainConfig& tc, int x_dim, int gate_in)
        : moe(x_dim, tc.expert_hidden, tc.n_experts, gate_in, tc.gate_hidden,
              {"ctr", "cvr", "relv", "shared"}),
          tower_relv(tc.expert_hidden.back(), tc.tower_b, true, false),
          shared_tower(tc.expert_hidden.back(), tc.tower_b, true, false),
          tower_ctr(tc.expert_hidden.back() + tc.tower_b.back(), tc.tower_a,
                    tc.expert_hidden.back() + tc.tower_b.back()),
          tower_cvr(tc.expert_hidden.back() + tc.tower_b.back(), tc.tower_a,
                    tc.expert_hidden.back() + tc.tower_b.back()),
          head_ctr(tc.expert_hidden.back() + 2 * tc.tower_b.back()),
          head_cvr(tc.expert_hidden.back() + 2 * tc.tower_b.back()),
          head_relv(tc.tower_b.back()) {}

    void register_params(ParamSet<T>& ps) {
        moe.register_params(ps, "moe");
        tower_relv.register_params(ps, "tower.relv");
        shared_tower.register_params(ps, "shared");
        tower_ctr.register_params(ps, "tower.ctr");
        tower_cvr.register_params(ps, "tower.cvr");
        head_ctr.register_params(ps, "head.ctr");
        head_cvr.register_params(ps, "head.cvr");
        head_relv.register_params(ps, "head.relv");
    }
};

// One independent branch of the single-task ablation: own experts, one gate,
// a residual tower, and a head over the task representation alone.
template <typename T>
struct SingleTaskBranch {
    MoeBlock<T> moe;
    TaskTower<T> tower;
    Head<T> head;

    SingleTaskBranch(const TrainConfig& tc, int x_dim, int gate_in, bool gates_on_input)
        : moe(x_dim, tc.expert_hidden, tc.n_experts, gate_in, tc.gate_hidden, {"mix"}),
          tower(tc.expert_hidden.back(), tc.tower_a, tc.expert_hidden.back()),
          head(tc.expert_hidden.back()) {
        moe.gates_on_input = gates_on_input;
    }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        moe.register_params(ps, prefix + ".moe");
        tower.register_params(ps, prefix + ".tower");
        head.register_params(ps, prefix + ".head");
    }

    int forward(Tape<T>& t, int x, int e_role, bool training, T rate, Rng* rng) const {
        int stacked = moe.experts_stacked(t, x, training, rate, rng);
        int xh = moe.combine(t, stacked, 0, moe.gates_on_input ? x : e_role);
        int o = t.add(xh, tower.forward(t, xh, training, rate, rng));
        return head.forward(t, o);
    }
};

template <typename T>
class Model {
public:
    struct Outputs {
        int y_ctr = -1;
        int y_cvr = -1;
        int y_relv = -1;  // -1: variant has no relevance head
    };

    // Non-movable: the parameter registry points into member tensors.
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    explicit Model(const Config& cfg) : cfg_(cfg), vocabs_(VocabSet::with_capacities(cfg)) {
        const TrainConfig& tc = cfg_.train;
        use_jd_ = tc.ablation == Ablation::full || tc.ablation == Ablation::no_llm_summary;
        mtl_ = tc.ablation != Ablation::no_jd_no_mtl &&
               tc.ablation != Ablation::no_jd_no_mtl_no_pmmoe;
        gates_on_input_ = tc.ablation == Ablation::no_jd_no_mtl_no_pmmoe;

        if (tc.text_embedder == "file")
            embedder_ = std::make_unique<FileTextEmbedder<T>>(tc.embeddings_file, tc.text_dim);
        else
            embedder_ = std::make_unique<HashTextEmbedder<T>>(tc.text_dim);
        if (tc.ablation == Ablation::no_llm_summary)
            summary_ = std::make_unique<ConcatSummaryProvider>();
        else if (tc.summary_provider == "file")
            summary_ = std::make_unique<FileSummaryProvider>(tc.summaries_file);
        else
            summary_ = std::make_unique<TemplateSummaryProvider>(tc.top_k_history_for_summary);

        emb_recruiter_ = EmbeddingTable<T>(cfg_.gen.n_recruiters + 1, tc.id_dim);
        emb_query_ = EmbeddingTable<T>(cfg_.gen.n_queries + 1, tc.id_dim);
        emb_talent_ = EmbeddingTable<T>(cfg_.gen.n_talents + 1, tc.id_dim);
        emb_role_ = EmbeddingTable<T>(1 + kNumRoles, tc.id_dim);

        x_dim_ = use_jd_ ? 3 * tc.id_dim + tc.jd_dim : 4 * tc.id_dim;
        int gate_in = gates_on_input_ ? x_dim_ : tc.id_dim;
        if (use_jd_)
            jd_.emplace(tc.text_dim, tc.id_dim, tc.jd_dim, tc.max_history);
        else
            emb_job_.emplace(cfg_.gen.n_jobs + 1, tc.id_dim);

        if (mtl_) {
            core_.emplace(tc, x_dim_, gate_in);
        } else {
            st_ctr_.emplace(tc, x_dim_, gate_in, gates_on_input_);
            st_cvr_.emplace(tc, x_dim_, gate_in, gates_on_input_);
        }

        emb_recruiter_.register_params(params_, "emb.recruiter");
        emb_query_.register_params(params_, "emb.query");
        emb_talent_.register_params(params_, "emb.talent");
        emb_role_.register_params(params_, "emb.role");
        if (use_jd_)
            jd_->register_params(params_, "jd");
        else
            emb_job_->register_params(params_, "emb.job");
        if (mtl_) {
            core_->register_params(params_);
        } else {
            st_ctr_->register_params(params_, "ctr");
            st_cvr_->register_params(params_, "cvr");
        }
        params_.init_all(Rng::seeded(tc.seed));
    }

    const Config& config() const { return cfg_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    VocabSet& vocabs() { return vocabs_; }
    const VocabSet& vocabs() const { return vocabs_; }
    int x_dim() const { return x_dim_; }
    bool multi_task() const { return mtl_; }

    Outputs forward(Tape<T>& t, const InteractionRecord& rec, bool training, Rng* drop_rng) const {
        const TrainConfig& tc = cfg_.train;
        T rate = static_cast<T>(tc.dropout);
        int e_r = emb_recruiter_.lookup(t, vocabs_.recruiter.lookup(rec.recruiter_id));
        int e_q = emb_query_.lookup(t, vocabs_.query.lookup(rec.query_id));
        int e_t = emb_talent_.lookup(t, vocabs_.talent.lookup(rec.talent_id));
        int e_role = emb_role_.lookup(t, static_cast<int>(rec.role));
        int e_j = use_jd_
                      ? jd_->forward(t, rec, *summary_, *embedder_, emb_talent_, vocabs_.talent, e_t)
                      : emb_job_->lookup(t, vocabs_.job.lookup(rec.job_id));
        int x = t.concat_cols({e_r, e_q, e_t, e_j});

        Outputs out;
        if (!mtl_) {
            out.y_ctr = st_ctr_->forward(t, x, e_role, training, rate, drop_rng);
            out.y_cvr = st_cvr_->forward(t, x, e_role, training, rate, drop_rng);
            return out;
        }
        const MtlCore<T>& m = *core_;
        int stacked = m.moe.experts_stacked(t, x, training, rate, drop_rng);
        int gate_in = m.moe.gates_on_input ? x : e_role;
        int xh_ctr = m.moe.combine(t, stacked, 0, gate_in);
        int xh_cvr = m.moe.combine(t, stacked, 1, gate_in);
        int xh_relv = m.moe.combine(t, stacked, 2, gate_in);
        int xh_shared = m.moe.combine(t, stacked, 3, gate_in);

        int o_relv = m.tower_relv.forward(t, xh_relv, training, rate, drop_rng);
        // Injected relevance signal; optionally cut off from the CTR/CVR
        // gradients so those losses cannot distort the relevance tower.
        int inject = tc.relevance_stop_gradient ? t.detach(o_relv) : o_relv;
        int o_s = m.shared_tower.forward(t, xh_shared, training, rate, drop_rng);

        int in_ctr = t.concat_cols({xh_ctr, inject});
        int o_ctr = t.add(in_ctr, m.tower_ctr.forward(t, in_ctr, training, rate, drop_rng));
        int in_cvr = t.concat_cols({xh_cvr, inject});
        int o_cvr = t.add(in_cvr, m.tower_cvr.forward(t, in_cvr, training, rate, drop_rng));

        out.y_ctr = m.head_ctr.forward(t, t.concat_cols({o_ctr, o_s}));
        out.y_cvr = m.head_cvr.forward(t, t.concat_cols({o_cvr, o_s}));
        out.y_relv = m.head_relv.forward(t, o_relv);
        return out;
    }

    LossNodes loss(Tape<T>& t, const Outputs& out, const InteractionRecord& rec) const {
        LossWeights w{cfg_.train.lambda_ctr, cfg_.train.lambda_cvr, cfg_.train.lambda_relv};
        return joint_loss(t, out.y_ctr, out.y_cvr, out.y_relv, rec, w);
    }

    Predictions predict(const InteractionRecord& rec) const {
        Tape<T> t(/*track_grads=*/false);
        Outputs out = forward(t, rec, /*training=*/false, nullptr);
        Predictions p;
        p.p_ctr = static_cast<double>(t.value(out.y_ctr).at(0, 1));
        p.p_cvr = static_cast<double>(t.value(out.y_cvr).at(0, 1));
        p.p_relv = out.y_relv < 0 ? 0.5 : static_cast<double>(t.value(out.y_relv).at(0, 1));
        p.score = final_score(p.p_ctr, p.p_cvr);
        return p;
    }

private:
    Config cfg_;
    VocabSet vocabs_;
    std::unique_ptr<TextEmbedder<T>> embedder_;
    std::unique_ptr<SummaryProvider> summary_;
    EmbeddingTable<T> emb_recruiter_, emb_query_, emb_talent_, emb_role_;
    std::optional<EmbeddingTable<T>> emb_job_;
    std::optional<JdEncoder<T>> jd_;
    std::optional<MtlCore<T>> core_;
    std::optional<SingleTaskBranch<T>> st_ctr_, st_cvr_;
    ParamSet<T> params_;
    int x_dim_ = 0;
    bool use_jd_ = false;
    bool mtl_ = true;
    bool gates_on_input_ = false;
};

}  // namespace rankmoe
