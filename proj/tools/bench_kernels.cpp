// Compares the serial reference kernels against the OpenMP versions and
// times a full training step of both architectures. Reported speedups track
// the OpenMP thread count; on a single hardware thread they sit near 1.0.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "titlegen/corpus/corpus.hpp"
#include "titlegen/models/model.hpp"
#include "titlegen/tensor/adam.hpp"
#include "titlegen/tensor/kernels.hpp"
#include "titlegen/tensor/ops.hpp"
#include "titlegen/tensor/rng.hpp"

using namespace titlegen;
using Clock = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(Clock::now() - start).count() /
         static_cast<double>(reps);
}

void bench_matmul(std::size_t p, std::size_t q, std::size_t r, int reps) {
  tensor::Rng rng(7);
  std::vector<double> a(p * q), b(q * r), c(p * r);
  for (auto& x : a) x = rng.uniform(-1, 1);
  for (auto& x : b) x = rng.uniform(-1, 1);

  const double ts = time_of(
      [&] {
        tensor::kernels::serial::matmul(a.data(), b.data(), c.data(), p, q, r,
                                        false, false, false);
      },
      reps);
  const double tp = time_of(
      [&] {
        tensor::kernels::par::matmul(a.data(), b.data(), c.data(), p, q, r,
                                     false, false, false);
      },
      reps);
  const double gflop = 2.0 * static_cast<double>(p * q * r) / 1e9;
  std::printf("matmul %4zux%-4zu * %4zux%-4zu  serial %7.2f ms (%5.2f GF/s)  "
              "omp %7.2f ms (%5.2f GF/s)  speedup %.2fx\n",
              p, q, q, r, ts * 1e3, gflop / ts, tp * 1e3, gflop / tp, ts / tp);
}

void bench_elementwise(std::size_t n, int reps) {
  tensor::Rng rng(11);
  std::vector<double> x(n), y(n);
  for (auto& v : x) v = rng.uniform(-2, 2);
  const double ts = time_of(
      [&] { tensor::kernels::serial::tanh_vec(x.data(), y.data(), n); }, reps);
  const double tp = time_of(
      [&] { tensor::kernels::par::tanh_vec(x.data(), y.data(), n); }, reps);
  std::printf("tanh   %9zu elems        serial %7.2f ms            omp "
              "%7.2f ms            speedup %.2fx\n",
              n, ts * 1e3, tp * 1e3, ts / tp);
}

void bench_softmax(std::size_t m, std::size_t n, int reps) {
  tensor::Rng rng(13);
  std::vector<double> x(m * n), y(m * n);
  for (auto& v : x) v = rng.uniform(-4, 4);
  const double ts = time_of(
      [&] { tensor::kernels::serial::softmax_rows(x.data(), y.data(), m, n); },
      reps);
  const double tp = time_of(
      [&] { tensor::kernels::par::softmax_rows(x.data(), y.data(), m, n); },
      reps);
  std::printf("softmax %5zux%-6zu rows      serial %7.2f ms            omp "
              "%7.2f ms            speedup %.2fx\n",
              m, n, ts * 1e3, tp * 1e3, ts / tp);
}

corpus::Batch toy_batch(std::size_t batch, std::size_t src_len,
                        std::size_t tgt_len, std::size_t src_vocab,
                        std::size_t tgt_vocab, tensor::Rng& rng) {
  std::vector<corpus::EncodedExample> examples(batch);
  for (auto& e : examples) {
    for (std::size_t i = 0; i < src_len; ++i)
      e.source.push_back(
          static_cast<int>(4 + rng.bounded(src_vocab - 4)));
    e.target.push_back(corpus::Vocab::kBos);
    for (std::size_t i = 0; i + 2 < tgt_len; ++i)
      e.target.push_back(static_cast<int>(4 + rng.bounded(tgt_vocab - 4)));
    e.target.push_back(corpus::Vocab::kEos);
  }
  return corpus::make_eval_batches(examples, batch).front();
}

void bench_train_step(models::Arch arch, int reps) {
  models::ModelConfig config;
  config.architecture = arch;
  config.source_vocab_size = 1000;
  config.target_vocab_size = 120;
  tensor::Rng rng(17);
  const corpus::Batch batch = toy_batch(64, 16, 7, config.source_vocab_size,
                                        config.target_vocab_size, rng);
  models::ModelParams params = models::init_params(config, 5);
  tensor::AdamState opt =
      tensor::AdamState::init(params.total_size(), 0.005, 0.0001);
  const std::vector<int> targets = models::shifted_targets(batch);

  const double t = time_of(
      [&] {
        tensor::Tape tape;
        const tensor::Tensor logits =
            models::model_forward(params, config, batch);
        const tensor::Tensor loss =
            tensor::cross_entropy_nll(logits, targets, corpus::Vocab::kPad);
        params.zero_grads();
        tape.backward(loss);
        std::vector<double> flat = params.flat_values();
        tensor::adam_step(flat, params.flat_grads(), opt);
        params.set_flat_values(flat);
      },
      reps);
  std::printf("%-12s train step (batch 64)                    %8.1f ms\n",
              std::string(models::arch_name(arch)).c_str(), t * 1e3);
}

}  // namespace

int main() {
  std::printf("threads available to OpenMP: %d\n",
              tensor::kernels::max_threads());
  bench_matmul(1024, 128, 128, 10);
  bench_matmul(896, 128, 256, 10);
  bench_matmul(128, 512, 128, 10);
  bench_elementwise(1 << 20, 20);
  bench_softmax(4096, 128, 20);
  bench_train_step(models::Arch::kTransformer, 3);
  bench_train_step(models::Arch::kRnn, 3);
  return 0;
}
