#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cml/autodiff/parameter_set.hpp"
#include "cml/episodes/sampler.hpp"
#include "cml/meta/class_storage.hpp"
#include "cml/meta/losses.hpp"
#include "cml/nn/models.hpp"

namespace cml::meta {

/// Fixed choices of one CML run (everything except the learned state).
struct CmlConfig {
    nn::NetworkSpec teacher;
    nn::NetworkSpec student;
    nn::NetworkSpec discriminator;
    /// Multiplies the cosine logits; 1 is the plain classifier.
    double scale = 1.0;
    LossKind loss = LossKind::binary;
    ad::Mode mode = ad::Mode::second_order;
    /// false gives the "without discriminator" ablation: no D steps and no
    /// adversarial term in the student's outer loss.
    bool use_discriminator = true;
    Index batch_tasks = 4;
    /// beta <- beta * decay after every `epoch_length` meta-iterations.
    double decay = 0.9;
    Index epoch_length = 100;
    int threads = 1;
};

template <typename S>
struct MetaState {
    ad::ParameterSet<S> theta_s;
    ad::ParameterSet<S> theta_d;
    double alpha_s = 0.01;
    double alpha_d = 0.01;
    double beta_s = 0.1;
    double beta_d = 0.001;
    int inner_steps = 5;
    std::uint64_t iteration = 0;

    /// Positive step sizes (zero allowed for the ablation-style checks),
    /// inner_steps >= 1.
    void validate() const;
    friend bool operator==(const MetaState&, const MetaState&) = default;
};

/// Fresh state: random θ_s, θ_d for the given specs.
template <typename S>
MetaState<S> init_state(const CmlConfig& config, std::uint64_t seed);

/// A task's inputs with teacher features already attached.
template <typename S>
struct Episode {
    std::uint64_t id = 0;
    Index ways = 0;
    std::vector<int> labels;
    Matrix<S> support_x, support_t;
    Matrix<S> query_x, query_t;
    std::vector<int> support_targets, query_targets;
};

template <typename S>
Episode<S> make_episode(const episodes::Task& task, const episodes::Dataset& data, const nn::TeacherCache<S>& teacher);

/// Generic inner loop: `steps` times θ <- θ - alpha * ∇loss(θ). With
/// create_graph the result stays differentiable w.r.t. the input θ.
template <typename S>
struct Adapted {
    ad::VarSet<S> params;
    std::vector<double> losses; // loss before each step
};

template <typename S>
using LossFn = std::function<Var<S>(const ad::VarSet<S>&)>;

template <typename S>
Adapted<S> adapt(const ad::VarSet<S>& params, const LossFn<S>& loss, double alpha, int steps, bool create_graph);

/// Result of fast-learning inside a graph.
template <typename S>
struct FastLearned {
    ad::VarSet<S> theta_s;
    ad::VarSet<S> theta_d; // empty unless the discriminator was trained
    Var<S> v;              // class vectors rebuilt from theta_s
    std::vector<double> train_losses;
};

/// Inner steps on the support set; when `train_discriminator` is set the
/// discriminator takes one step per inner step on detached student features.
template <typename S>
FastLearned<S> fast_learn(const MetaState<S>& state, const CmlConfig& config, const Episode<S>& ep,
                          const ad::VarSet<S>& theta_s, const ad::VarSet<S>& theta_d, bool train_discriminator);

/// Value-level fast-learning, no discriminator: adapted θ'_s and V'.
template <typename S>
struct Adaptation {
    ad::ParameterSet<S> theta_s;
    AllClassMatrix<S> v;
    std::vector<double> train_losses;
};

template <typename S>
Adaptation<S> fast_learn_values(const MetaState<S>& state, const CmlConfig& config, const Episode<S>& ep);

/// The student's outer loss at adapted parameters: mean over the query set
/// of ℓ_s plus, when the discriminator is on, log(1 - D(G(x))) scored by the
/// (constant) discriminator parameters `theta_d_fixed`.
template <typename S>
Var<S> student_outer_loss(const CmlConfig& config, const Episode<S>& ep, const ad::VarSet<S>& theta_s_adapted,
                          const Var<S>& v, const ad::ParameterSet<S>* theta_d_fixed);

/// The discriminator's outer loss: mean ℓ_d over the query set. The
/// student features are detached here.
template <typename S>
Var<S> discriminator_outer_loss(const CmlConfig& config, const Episode<S>& ep, const ad::VarSet<S>& theta_d_adapted,
                                const Var<S>& student_features);

/// D applied to the stacked batch [M_t; M_s] (batch norm sees both halves);
/// returns (D(M_t), D(M_s)).
template <typename S>
std::pair<Var<S>, Var<S>> discriminate(const CmlConfig& config, const ad::VarSet<S>& theta_d, const Var<S>& teacher,
                                       const Var<S>& student);

struct UpdateStats {
    double student_loss = 0.0;
    double discriminator_loss = 0.0;
};

/// One meta-update over a batch of tasks; steps θ_s by β_s and θ_d by β_d.
template <typename S>
UpdateStats meta_update(MetaState<S>& state, const CmlConfig& config, std::span<const Episode<S>> batch);

/// Meta-gradients of one task (w.r.t. the pre-adaptation parameters).
template <typename S>
struct TaskGradients {
    ad::ParameterSet<S> theta_s;
    ad::ParameterSet<S> theta_d;
    double student_loss = 0.0;
    double discriminator_loss = 0.0;
};

template <typename S>
TaskGradients<S> task_meta_gradients(const MetaState<S>& state, const CmlConfig& config, const Episode<S>& ep);

struct TrainLog {
    std::vector<double> student_loss;
    std::vector<double> discriminator_loss;
};

/// `iterations` meta-updates on batches drawn at sampler positions
/// iteration*batch .. iteration*batch+batch-1.
template <typename S>
TrainLog meta_train(MetaState<S>& state, const CmlConfig& config, const episodes::TaskSampler& sampler,
                    const nn::TeacherCache<S>& teacher, std::uint64_t iterations);

/// Mean query accuracy over independent (non-sequential) tasks.
template <typename S>
double evaluate_tasks(const MetaState<S>& state, const CmlConfig& config, std::span<const Episode<S>> tasks);

/// Query accuracy of the teacher features against stored class vectors.
template <typename S>
double query_accuracy(const CmlConfig& config, const Episode<S>& ep, const AllClassMatrix<S>& v);

} // namespace cml::meta
