#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cml/meta/sequential.hpp"

namespace cml::baselines {

using ad::Index;
using ad::Matrix;
using ad::Var;
using meta::AccuracyTable;
using meta::Episode;

/// Settings shared by MAML, MAML+FT, MAML+MAS and PN+CSM.
struct BaselineConfig {
    /// Embedding network; MAML appends an N-way linear head to it.
    nn::NetworkSpec net;
    Index ways = 5;
    double alpha = 0.01; // inner / fine-tune step
    double beta = 0.1;   // outer step
    int inner_steps = 5;
    int finetune_steps = 5;
    double mas_lambda = 1.0;
    ad::Mode mode = ad::Mode::second_order;
    Index batch_tasks = 4;
    double decay = 0.9;
    Index epoch_length = 100;
    int threads = 1;
};

/// Per-entry importance weights, keyed like the parameters.
template <typename S>
using ImportanceMap = ad::ParameterSet<S>;

/// label -> prototype; the stored form is the same as CML's class vectors.
template <typename S>
using PrototypeSet = meta::AllClassMatrix<S>;

/// Episode without teacher features.
template <typename S>
Episode<S> plain_episode(const episodes::Task& task, const episodes::Dataset& data);

/// `spec` followed by a linear layer with `ways` outputs.
nn::NetworkSpec with_head(const nn::NetworkSpec& spec, Index ways);

template <typename S>
ad::ParameterSet<S> init_maml(const BaselineConfig& config, std::uint64_t seed);

/// Mean softmax cross-entropy of the classifier on (x, targets).
template <typename S>
Var<S> classifier_loss(const BaselineConfig& config, const ad::VarSet<S>& theta, const Matrix<S>& x,
                       const std::vector<int>& targets);

template <typename S>
double classifier_accuracy(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Matrix<S>& x,
                           const std::vector<int>& targets);

/// Gradient of the query loss after inner adaptation, w.r.t. the initial θ.
template <typename S>
ad::ParameterSet<S> maml_task_gradient(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                       const Episode<S>& ep, double* loss = nullptr);

/// `iterations` MAML meta-updates; batches come from sampler positions
/// it*batch .. it*batch+batch-1 for it in [start, start+iterations).
template <typename S>
std::vector<double> maml_meta_train(ad::ParameterSet<S>& theta, const BaselineConfig& config,
                                    const episodes::TaskSampler& sampler, std::uint64_t iterations,
                                    std::uint64_t start = 0);

/// `finetune_steps` plain gradient steps on the support set.
template <typename S>
ad::ParameterSet<S> finetune(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Episode<S>& ep);

/// Fine-tunes the current parameters on each arriving task (no reset) and
/// evaluates them on every task seen so far.
template <typename S>
AccuracyTable maml_ft_sequential(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                 const std::vector<Episode<S>>& sequence);

/// Ω_k = mean over rows of x of |∂ ||f(x)||² / ∂θ_k|, f the full classifier.
template <typename S>
ImportanceMap<S> mas_importance(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Matrix<S>& x);

/// λ Σ_k Ω_k (θ_k - θ*_k)².
template <typename S>
double mas_penalty(const ad::ParameterSet<S>& theta, const ad::ParameterSet<S>& anchor,
                   const ImportanceMap<S>& omega, double lambda);

/// Fine-tuning with the MAS penalty. Each step is a gradient step on the
/// task loss followed by the exact proximal map of the quadratic penalty,
/// which stays stable for any λ.
template <typename S>
ad::ParameterSet<S> finetune_mas(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                 const Episode<S>& ep, const ad::ParameterSet<S>& anchor,
                                 const ImportanceMap<S>& omega, double lambda);

template <typename S>
AccuracyTable maml_mas_sequential(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                  const std::vector<Episode<S>>& sequence, double lambda);

/// Class means of the embedded support set.
template <typename S>
PrototypeSet<S> prototypes(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Episode<S>& ep);

/// Row-wise softmax over negative squared distances to the prototypes.
template <typename S>
Var<S> prototype_probabilities(const Var<S>& embedded, const Var<S>& protos);

template <typename S>
ad::ParameterSet<S> init_embedding(const BaselineConfig& config, std::uint64_t seed);

template <typename S>
ad::ParameterSet<S> pn_task_gradient(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                     const Episode<S>& ep, double* loss = nullptr);

/// Episodic prototypical training, same batching and decay as MAML.
template <typename S>
std::vector<double> pn_train(ad::ParameterSet<S>& theta, const BaselineConfig& config,
                             const episodes::TaskSampler& sampler, std::uint64_t iterations, std::uint64_t start = 0);

template <typename S>
double pn_accuracy(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Episode<S>& ep,
                   const PrototypeSet<S>& protos);

/// Stores each arriving task's prototypes and evaluates every seen task
/// from the stored copies.
template <typename S>
AccuracyTable pn_csm_sequential(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                const std::vector<Episode<S>>& sequence, meta::ClassStorage<S>& csm);

} // namespace cml::baselines
