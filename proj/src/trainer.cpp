#include "vlclip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

namespace vlclip {

namespace {

void check_batch(const BatchPair& batch) {
  if (batch.size() == 0) raise(errc::invalid_argument, "batch must have N >= 1");
  if (batch.images.rows != batch.texts.rows || batch.images.cols != batch.texts.cols) {
    raise(errc::dimension_mismatch, "image/text matrices disagree");
  }
  for (double v : batch.images.a) {
    if (!std::isfinite(v)) raise(errc::non_finite_input, "image batch has non-finite entry");
  }
  for (double v : batch.texts.a) {
    if (!std::isfinite(v)) raise(errc::non_finite_input, "text batch has non-finite entry");
  }
}

/// logits[i][j] = v_i . t_j / tau
Mat logits_matrix(const BatchPair& batch, double tau) {
  std::size_t n = batch.size();
  std::size_t d = batch.images.cols;
  Mat s(n, n);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    auto i = static_cast<std::size_t>(ii);
    const double* v = batch.images.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* t = batch.texts.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += v[k] * t[k];
      s(i, j) = acc / tau;
    }
  }
  return s;
}

double lse_row(const Mat& s, std::size_t i) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < s.cols; ++j) mx = std::max(mx, s(i, j));
  double acc = 0.0;
  for (std::size_t j = 0; j < s.cols; ++j) acc += std::exp(s(i, j) - mx);
  return mx + std::log(acc);
}

double lse_col(const Mat& s, std::size_t j) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.rows; ++i) mx = std::max(mx, s(i, j));
  double acc = 0.0;
  for (std::size_t i = 0; i < s.rows; ++i) acc += std::exp(s(i, j) - mx);
  return mx + std::log(acc);
}

}  // namespace

double clip_loss(const BatchPair& batch, double tau) {
  check_batch(batch);
  if (tau <= 0.0) raise(errc::invalid_argument, "tau must be positive");

  std::size_t n = batch.size();
  Mat s = logits_matrix(batch, tau);

  std::vector<double> row_terms(n), col_terms(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    auto i = static_cast<std::size_t>(ii);
    row_terms[i] = lse_row(s, i) - s(i, i);
    col_terms[i] = lse_col(s, i) - s(i, i);
  }

  // Fixed-order reduction keeps the result identical across thread counts
  // (and bitwise equal to the serial reference).
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += row_terms[i];
    total += col_terms[i];
  }
  double loss = total / (2.0 * static_cast<double>(n));
  if (!std::isfinite(loss)) raise(errc::non_finite_input, "loss is not finite");
  return loss;
}

ClipGrad clip_loss_grad(const BatchPair& batch, double tau) {
  check_batch(batch);
  if (tau <= 0.0) raise(errc::invalid_argument, "tau must be positive");

  std::size_t n = batch.size();
  std::size_t d = batch.images.cols;
  Mat s = logits_matrix(batch, tau);

  // g = (P + Q - 2I) / 2N, with P row-softmax and Q column-softmax of s.
  Mat g(n, n);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    auto i = static_cast<std::size_t>(ii);
    double row_lse = lse_row(s, i);
    for (std::size_t j = 0; j < n; ++j) {
      g(i, j) = std::exp(s(i, j) - row_lse);
    }
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t jj = 0; jj < static_cast<std::int64_t>(n); ++jj) {
    auto j = static_cast<std::size_t>(jj);
    double col_lse = lse_col(s, j);
    for (std::size_t i = 0; i < n; ++i) {
      g(i, j) += std::exp(s(i, j) - col_lse);
    }
  }
  double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    g(i, i) -= 2.0;
  }
  for (double& v : g.a) v *= scale;

  ClipGrad grad;
  grad.d_images = Mat(n, d);
  grad.d_texts = Mat(n, d);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double gij = g(i, j) / tau;
      const double* t = batch.texts.row(j);
      double* dv = grad.d_images.row(i);
      for (std::size_t k = 0; k < d; ++k) dv[k] += gij * t[k];
    }
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t jj = 0; jj < static_cast<std::int64_t>(n); ++jj) {
    auto j = static_cast<std::size_t>(jj);
    for (std::size_t i = 0; i < n; ++i) {
      double gij = g(i, j) / tau;
      const double* v = batch.images.row(i);
      double* dt = grad.d_texts.row(j);
      for (std::size_t k = 0; k < d; ++k) dt[k] += gij * v[k];
    }
  }
  return grad;
}

double recall_at_k(const Mat& images, const Mat& texts, std::size_t k) {
  if (images.rows != texts.rows || images.cols != texts.cols) {
    raise(errc::dimension_mismatch, "recall_at_k requires aligned matrices");
  }
  if (images.rows == 0) raise(errc::empty_dataset, "recall over empty set");

  std::size_t n = images.rows;
  std::size_t d = images.cols;
  std::vector<int> hits(n, 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t ti = 0; ti < static_cast<std::int64_t>(n); ++ti) {
    auto i = static_cast<std::size_t>(ti);
    const double* t = texts.row(i);
    auto sim_to = [&](std::size_t img) {
      const double* v = images.row(img);
      double acc = 0.0;
      for (std::size_t x = 0; x < d; ++x) acc += v[x] * t[x];
      return acc;
    };
    double paired = sim_to(i);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = sim_to(j);
      if (s > paired || (s == paired && j < i)) ++ahead;
    }
    hits[i] = ahead < k ? 1 : 0;
  }
  long total = std::accumulate(hits.begin(), hits.end(), 0L);
  return static_cast<double>(total) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Projection heads and fitting
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (tau <= 0.0) raise(errc::invalid_argument, "tau must be positive");
  if (patience < 1) raise(errc::invalid_argument, "patience must be >= 1");
  if (epochs < 1) raise(errc::invalid_argument, "epochs must be >= 1");
  if (batch_size < 1) raise(errc::invalid_argument, "batch_size must be >= 1");
}

ProjectionHead ProjectionHead::identity(std::size_t head_dim, std::size_t input_dim) {
  ProjectionHead head;
  head.weights = Mat(head_dim, input_dim);
  for (std::size_t i = 0; i < std::min(head_dim, input_dim); ++i) head.weights(i, i) = 1.0;
  return head;
}

Mat ProjectionHead::project(const Mat& input) const {
  if (input.cols != weights.cols) raise(errc::dimension_mismatch, "head input dim mismatch");
  Mat out(input.rows, weights.rows);
  bool collapsed = false;  // exceptions may not cross the parallel region
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(input.rows); ++ii) {
    auto i = static_cast<std::size_t>(ii);
    const double* x = input.row(i);
    double* y = out.row(i);
    for (std::size_t r = 0; r < weights.rows; ++r) {
      const double* w = weights.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < weights.cols; ++c) acc += w[c] * x[c];
      y[r] = acc;
    }
    double sq = 0.0;
    for (std::size_t r = 0; r < weights.rows; ++r) sq += y[r] * y[r];
    double norm = std::sqrt(sq);
    if (norm < 1e-12) {
      collapsed = true;
      continue;
    }
    for (std::size_t r = 0; r < weights.rows; ++r) y[r] /= norm;
  }
  if (collapsed) raise(errc::zero_vector, "projection collapsed to zero");
  return out;
}

EmbeddingVector ProjectionHead::project(const EmbeddingVector& input) const {
  Mat x(1, input.dim());
  for (std::size_t i = 0; i < input.dim(); ++i) x(0, i) = input.values[i];
  Mat y = project(x);
  std::vector<float> out(y.cols);
  for (std::size_t i = 0; i < y.cols; ++i) out[i] = static_cast<float>(y(0, i));
  return EmbeddingVector{std::move(out)};
}

namespace {

Mat gather_rows(const Mat& src, const std::vector<std::size_t>& rows) {
  Mat out(rows.size(), src.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(src.row(rows[i]), src.row(rows[i]) + src.cols, out.row(i));
  }
  return out;
}

// Projects with intermediate state kept for the backward pass.
struct ProjectedBatch {
  Mat raw;     // X = input . W^T, pre-normalization
  Mat normed;  // rows of raw normalized
  std::vector<double> norms;
};

ProjectedBatch forward(const ProjectionHead& head, const Mat& input) {
  ProjectedBatch pb;
  pb.raw = Mat(input.rows, head.weights.rows);
  pb.normed = Mat(input.rows, head.weights.rows);
  pb.norms.resize(input.rows);
  for (std::size_t i = 0; i < input.rows; ++i) {
    const double* x = input.row(i);
    double* y = pb.raw.row(i);
    for (std::size_t r = 0; r < head.weights.rows; ++r) {
      const double* w = head.weights.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < head.weights.cols; ++c) acc += w[c] * x[c];
      y[r] = acc;
    }
    double sq = 0.0;
    for (std::size_t r = 0; r < head.weights.rows; ++r) sq += y[r] * y[r];
    pb.norms[i] = std::sqrt(sq);
    if (pb.norms[i] < 1e-12) raise(errc::diverged_loss, "projection collapsed to zero");
    for (std::size_t r = 0; r < head.weights.rows; ++r) {
      pb.normed(i, r) = y[r] / pb.norms[i];
    }
  }
  return pb;
}

// dL/dW accumulated from dL/d(normalized rows), undoing the normalization.
Mat backward(const ProjectedBatch& pb, const Mat& input, const Mat& d_normed) {
  std::size_t head_dim = pb.raw.cols;
  Mat dw(head_dim, input.cols);
  for (std::size_t i = 0; i < input.rows; ++i) {
    const double* u = pb.normed.row(i);
    const double* g = d_normed.row(i);
    double g_dot_u = 0.0;
    for (std::size_t r = 0; r < head_dim; ++r) g_dot_u += g[r] * u[r];
    for (std::size_t r = 0; r < head_dim; ++r) {
      double dx = (g[r] - g_dot_u * u[r]) / pb.norms[i];
      const double* x = input.row(i);
      double* w = dw.row(r);
      for (std::size_t c = 0; c < input.cols; ++c) w[c] += dx * x[c];
    }
  }
  return dw;
}

}  // namespace

FitResult fit(const PairDataset& train, const PairDataset& validation,
              const TrainConfig& config) {
  config.validate();
  if (train.size() == 0 || validation.size() == 0) {
    raise(errc::empty_dataset, "train and validation sets must be non-empty");
  }
  for (const auto& id : train.ids) {
    if (std::find(validation.ids.begin(), validation.ids.end(), id) != validation.ids.end()) {
      raise(errc::invalid_argument, "item '" + id + "' appears in both train and validation");
    }
  }

  std::size_t input_dim = train.images.cols;
  std::size_t head_dim = config.head_dim == 0 ? input_dim : config.head_dim;

  FitResult result;
  result.image_head = ProjectionHead::identity(head_dim, input_dim);
  result.text_head = ProjectionHead::identity(head_dim, input_dim);
  ProjectionHead best_image = result.image_head;
  ProjectionHead best_text = result.text_head;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> batch_rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      if (batch_rows.size() < 2) continue;  // a singleton batch has zero gradient

      Mat vi = gather_rows(train.images, batch_rows);
      Mat ti = gather_rows(train.texts, batch_rows);
      ProjectedBatch pv = forward(result.image_head, vi);
      ProjectedBatch pt = forward(result.text_head, ti);

      BatchPair projected{pv.normed, pt.normed};
      double batch_loss = clip_loss(projected, config.tau);
      if (!std::isfinite(batch_loss)) raise(errc::diverged_loss, "training loss diverged");

      ClipGrad grad = clip_loss_grad(projected, config.tau);
      Mat dw_image = backward(pv, vi, grad.d_images);
      Mat dw_text = backward(pt, ti, grad.d_texts);
      for (std::size_t i = 0; i < dw_image.a.size(); ++i) {
        result.image_head.weights.a[i] -= config.learning_rate * dw_image.a[i];
      }
      for (std::size_t i = 0; i < dw_text.a.size(); ++i) {
        result.text_head.weights.a[i] -= config.learning_rate * dw_text.a[i];
      }
    }

    Mat val_u = result.image_head.project(validation.images);
    Mat val_s = result.text_head.project(validation.texts);
    double val_loss = clip_loss(BatchPair{val_u, val_s}, config.tau);
    EpochStats stats;
    stats.validation_loss = val_loss;
    stats.recall_at_10 = recall_at_k(val_u, val_s, 10);
    result.history.epochs.push_back(stats);

    if (val_loss < best_loss - config.min_improvement) {
      best_loss = val_loss;
      result.history.best_epoch = epoch;
      best_image = result.image_head;
      best_text = result.text_head;
      stall = 0;
    } else {
      if (val_loss < best_loss) {
        // Track the true minimum even when it does not reset patience.
        best_loss = val_loss;
        result.history.best_epoch = epoch;
        best_image = result.image_head;
        best_text = result.text_head;
      }
      ++stall;
      if (stall >= config.patience) {
        result.history.stopped_early = true;
        break;
      }
    }
  }

  result.image_head = best_image;
  result.text_head = best_text;
  return result;
}

void TrainHistory::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) raise(errc::io_error, "cannot write history " + path);
  out << "epoch,val_loss,recall_at_10\n";
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    out << i << "," << epochs[i].validation_loss << "," << epochs[i].recall_at_10 << "\n";
  }
}

// ---------------------------------------------------------------------------
// io
// ---------------------------------------------------------------------------

namespace {
constexpr char kHeadsMagic[] = "VLHEADS1";
}

void save_heads(const ProjectionHead& image_head, const ProjectionHead& text_head,
                const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kHeadsMagic, kHeadsMagic + 8);
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put_mat = [&](const Mat& m) {
    put_u32(static_cast<std::uint32_t>(m.rows));
    put_u32(static_cast<std::uint32_t>(m.cols));
    for (double v : m.a) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(bits);
    }
  };
  put_mat(image_head.weights);
  put_mat(text_head.weights);
  put_u32(crc32(std::span<const std::uint8_t>(buf.data(), buf.size())));

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot write heads " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::pair<ProjectionHead, ProjectionHead> load_heads(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io_error, "cannot read heads " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), kHeadsMagic, 8) != 0) {
    raise(errc::corrupt_snapshot, "bad heads file " + path);
  }
  std::size_t payload = buf.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(buf[payload + static_cast<std::size_t>(i)]) << (8 * i);
  }
  if (crc32(std::span<const std::uint8_t>(buf.data(), payload)) != stored) {
    raise(errc::corrupt_snapshot, "heads checksum mismatch");
  }

  std::size_t off = 8;
  auto get_u32 = [&]() {
    if (off + 4 > payload) raise(errc::corrupt_snapshot, "truncated heads file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + static_cast<std::size_t>(i)]) << (8 * i);
    off += 4;
    return v;
  };
  auto get_mat = [&]() {
    Mat m(get_u32(), get_u32());
    for (double& v : m.a) {
      std::uint32_t bits = get_u32();
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
    return m;
  };
  ProjectionHead image_head{get_mat()};
  ProjectionHead text_head{get_mat()};
  return {image_head, text_head};
}

PairDataset load_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open pairs " + path);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> images, texts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) raise(errc::malformed_record, "bad pairs line");
    ids.push_back(j.at("id").get<std::string>());
    images.push_back(j.at("image").get<std::vector<double>>());
    texts.push_back(j.at("text").get<std::vector<double>>());
  }
  if (ids.empty()) raise(errc::empty_dataset, "no pairs in " + path);
  std::size_t d = images.front().size();
  PairDataset ds;
  ds.ids = std::move(ids);
  ds.images = Mat(ds.ids.size(), d);
  ds.texts = Mat(ds.ids.size(), d);
  for (std::size_t i = 0; i < ds.ids.size(); ++i) {
    if (images[i].size() != d || texts[i].size() != d) {
      raise(errc::dimension_mismatch, "pair " + ds.ids[i] + " dim mismatch");
    }
    std::copy(images[i].begin(), images[i].end(), ds.images.row(i));
    std::copy(texts[i].begin(), texts[i].end(), ds.texts.row(i));
  }
  return ds;
}

void save_pairs_jsonl(const PairDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot write pairs " + path);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    nlohmann::json j;
    j["id"] = dataset.ids[i];
    j["image"] = std::vector<double>(dataset.images.row(i), dataset.images.row(i) + dataset.images.cols);
    j["text"] = std::vector<double>(dataset.texts.row(i), dataset.texts.row(i) + dataset.texts.cols);
    out << j.dump() << "\n";
  }
}

}  // namespace vlclip
