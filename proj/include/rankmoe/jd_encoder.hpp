#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "rankmoe/layers.hpp"
#include "rankmoe/record.hpp"
#include "rankmoe/summary.hpp"
#include "rankmoe/text_embedding.hpp"
#include "rankmoe/vocab.hpp"

namespace rankmoe {

// Builds the job-description embedding e_j:
//   - summary text + resume text are embedded and concatenated into c0,
//   - the gated cross layer mixes them into c,
//   - c is projected down and concatenated with the history-attention vector.
// Output width is jd_dim = proj_out + id_dim.
template <typename T>
struct JdEncoder {
    GatedCross<T> gcn;       // over 2*text_dim
    HistoryAttention<T> att; // over id_dim
    Linear<T> proj;          // 2*text_dim -> jd_dim - id_dim
    int max_history = 30;

    JdEncoder() = default;
    JdEncoder(int text_dim, int id_dim, int jd_dim, int max_history_)
        : gcn(2 * text_dim), att(id_dim), proj(2 * text_dim, jd_dim - id_dim), max_history(max_history_) {
        if (jd_dim <= id_dim)
            throw usage_error("jd_dim must exceed id_dim (attention occupies the last id_dim columns)");
    }

    int out_dim() const { return proj.out_dim() + att.dim(); }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        gcn.register_params(ps, prefix + ".gcn");
        att.register_params(ps, prefix + ".att");
        proj.register_params(ps, prefix + ".proj");
    }

    int forward(Tape<T>& t, const InteractionRecord& rec, const SummaryProvider& summary,
                const TextEmbedder<T>& embedder, const EmbeddingTable<T>& talent_emb,
                const Vocabulary& talent_vocab, int current_talent_node) const {
        std::string jd_doc = summary.summarize(rec.job_id, rec.jd_text, rec.history_talent_ids);
        std::vector<T> jd_vec = embedder.embed(rec.job_id, jd_doc);
        std::vector<T> resume_vec = embedder.embed(rec.talent_id, rec.resume_text);

        Tensor<T> c0(1, static_cast<int>(jd_vec.size() + resume_vec.size()));
        std::copy(jd_vec.begin(), jd_vec.end(), c0.data.begin());
        std::copy(resume_vec.begin(), resume_vec.end(), c0.data.begin() + static_cast<long>(jd_vec.size()));

        int c = gcn.forward(t, t.constant(std::move(c0)));
        int projected = proj.forward(t, c);

        int history = -1;
        if (!rec.history_talent_ids.empty()) {
            std::vector<int> idx;
            int h = std::min<int>(max_history, static_cast<int>(rec.history_talent_ids.size()));
            idx.reserve(static_cast<std::size_t>(h));
            for (int i = 0; i < h; ++i) idx.push_back(talent_vocab.lookup(rec.history_talent_ids[static_cast<std::size_t>(i)]));
            history = talent_emb.lookup_many(t, idx);
        }
        int att_out = att.forward(t, current_talent_node, history);
        return t.concat_cols({projected, att_out});
    }
};

}  // namespace rankmoe
