#include "xdsv/net.hpp"

namespace xdsv {

template <typename T>
SpeakerNet<T>::SpeakerNet(const NetConfig& cfg)
    : cfg_(cfg),
      backbone_(cfg.backbone),
      id_head_("id_embedding", cfg.backbone.pooled_dim(), cfg.backbone.embedding_dim) {
  if (cfg.embedding_bn) id_bn_ = std::make_unique<BatchNorm2d<T>>("id_embedding.bn", cfg.backbone.embedding_dim, false);
  if (cfg.attention != AttentionKind::None) {
    attention_ = std::make_unique<DomainAttention<T>>(
        cfg.attention, cfg.backbone.output_channels(), cfg.simam_lambda);
    domain_head_ = std::make_unique<Linear<T>>("domain_embedding", cfg.backbone.pooled_dim(),
                                               cfg.backbone.embedding_dim);
    if (cfg.embedding_bn)
      domain_bn_ = std::make_unique<BatchNorm2d<T>>("domain_embedding.bn", cfg.backbone.embedding_dim, false);
  }
}

template <typename T>
void SpeakerNet<T>::init(std::uint64_t seed) {
  backbone_.init(seed);
  id_head_.init(seed);
  if (attention_) {
    attention_->init(seed);
    domain_head_->init(seed);
  }
}

namespace {

template <typename T>
Tensor<T> head_forward(Linear<T>& head, BatchNorm2d<T>* bn, const Tensor<T>& pooled) {
  Tensor<T> z = head.forward(pooled);
  if (!bn) return z;
  const int batch = z.dim(0), dim = z.dim(1);
  z.reshape({batch, dim, 1, 1});
  z = bn->forward(z);
  z.reshape({batch, dim});
  return z;
}

template <typename T>
Tensor<T> head_backward(Linear<T>& head, BatchNorm2d<T>* bn, const Tensor<T>& dz) {
  if (!bn) return head.backward(dz);
  Tensor<T> g = dz;
  const int batch = g.dim(0), dim = g.dim(1);
  g.reshape({batch, dim, 1, 1});
  g = bn->backward(g);
  g.reshape({batch, dim});
  return head.backward(g);
}

}  // namespace

template <typename T>
NetOutput<T> SpeakerNet<T>::forward(const Tensor<T>& x) {
  f_ = backbone_.forward(x);
  NetOutput<T> out;
  if (!attention_) {
    pooled_id_ = gsp_forward(f_);
    out.z_id = head_forward(id_head_, id_bn_.get(), pooled_id_);
    return out;
  }
  DisentangledFeatures<T> split = disentangle(f_, *attention_);
  attention_map_ = std::move(split.attention);
  f_domain_ = std::move(split.f_domain);
  f_id_ = cfg_.detach_domain ? f_ : std::move(split.f_id);
  pooled_id_ = gsp_forward(f_id_);
  pooled_domain_ = gsp_forward(f_domain_);
  out.z_id = head_forward(id_head_, id_bn_.get(), pooled_id_);
  out.z_domain = head_forward(*domain_head_, domain_bn_.get(), pooled_domain_);
  return out;
}

template <typename T>
void SpeakerNet<T>::backward(const Tensor<T>& dz_id, const Tensor<T>* dz_domain) {
  const Tensor<T> df_id = gsp_backward(f_id_.empty() ? f_ : f_id_, pooled_id_,
                                       head_backward(id_head_, id_bn_.get(), dz_id));
  if (!attention_) {
    backbone_.backward(df_id);
    return;
  }
  Tensor<T> df_domain(f_.shape());
  if (dz_domain) df_domain = gsp_backward(f_domain_, pooled_domain_, head_backward(*domain_head_, domain_bn_.get(), *dz_domain));
  const Tensor<T> zeros(f_.shape());
  Tensor<T> df;
  if (cfg_.detach_domain) {
    // Only the attention parameters learn from the domain branch.
    disentangle_backward(f_, attention_map_, *attention_, zeros, df_domain);
    df = df_id;
  } else if (!cfg_.domain_grad_to_backbone) {
    df = disentangle_backward(f_, attention_map_, *attention_, df_id, zeros);
    disentangle_backward(f_, attention_map_, *attention_, zeros, df_domain);
  } else {
    df = disentangle_backward(f_, attention_map_, *attention_, df_id, df_domain);
  }
  backbone_.backward(df);
}

template <typename T>
void SpeakerNet<T>::set_training(bool training) {
  training_ = training;
  backbone_.set_training(training);
  id_head_.set_training(training);
  if (id_bn_) id_bn_->set_training(training);
  if (domain_bn_) domain_bn_->set_training(training);
  if (attention_) {
    attention_->set_training(training);
    domain_head_->set_training(training);
  }
}

template <typename T>
void SpeakerNet<T>::collect_params(ParamList<T>& out) {
  backbone_.collect_params(out);
  if (attention_) attention_->collect_params(out);
  id_head_.collect_params(out);
  if (id_bn_) id_bn_->collect_params(out);
  if (domain_head_) domain_head_->collect_params(out);
  if (domain_bn_) domain_bn_->collect_params(out);
}

template <typename T>
void SpeakerNet<T>::collect_buffers(BufferList<T>& out) {
  backbone_.collect_buffers(out);
  if (id_bn_) id_bn_->collect_buffers(out);
  if (domain_bn_) domain_bn_->collect_buffers(out);
}

template <typename T>
std::size_t SpeakerNet<T>::param_count() {
  ParamList<T> params;
  collect_params(params);
  return count_params(params);
}

template <typename T>
TrainingHeads<T>::TrainingHeads(int embedding_dim, const ArcFaceConfig& arcface,
                                bool with_domain_classifiers)
    : arcface("arcface", embedding_dim, arcface) {
  if (with_domain_classifiers) {
    cls1 = std::make_unique<DomainClassifier<T>>("ddal.cls1", embedding_dim);
    cls2 = std::make_unique<DomainClassifier<T>>("ddal.cls2", embedding_dim);
  }
}

template <typename T>
void TrainingHeads<T>::init(std::uint64_t seed) {
  arcface.init(seed);
  if (cls1) {
    cls1->init(seed);
    cls2->init(seed);
  }
}

template <typename T>
void TrainingHeads<T>::set_training(bool training) {
  if (cls1) {
    cls1->set_training(training);
    cls2->set_training(training);
  }
}

template <typename T>
void TrainingHeads<T>::collect_params(ParamList<T>& out) {
  arcface.collect_params(out);
  if (cls1) {
    cls1->collect_params(out);
    cls2->collect_params(out);
  }
}

template class SpeakerNet<float>;
template class SpeakerNet<double>;
template struct TrainingHeads<float>;
template struct TrainingHeads<double>;

}  // namespace xdsv
