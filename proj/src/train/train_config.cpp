#include "egolstm/train_config.hpp"

#include <stdexcept>

#include "egolstm/keyvalue.hpp"

namespace egolstm {

TrainConfig TrainConfig::defaults_for(std::string_view preset) {
  TrainConfig c;
  c.preset = std::string(preset);
  if (preset == "tiny") {
    c.iterations = 2000;
  } else if (preset != "full") {
    throw std::invalid_argument("unknown preset `" + std::string(preset) + "` (expected full|tiny)");
  }
  return c;
}

void TrainConfig::validate() const {
  if (preset != "full" && preset != "tiny") throw std::invalid_argument("preset must be full|tiny");
  if (!(lr >= 0)) throw std::invalid_argument("lr must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (!(rho > 0 && rho < 1)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  if (frames < 2) throw std::invalid_argument("frames must be at least 2");
  if (input_mode == InputMode::kFrameDifference && frames < 3) {
    throw std::invalid_argument("difference mode needs at least 3 frames");
  }
  if (eval_every < 0) throw std::invalid_argument("eval_every must be non-negative");
  if (!(val_split >= 0 && val_split < 1)) throw std::invalid_argument("val_split must lie in [0, 1)");
}

std::string TrainConfig::to_text() const {
  kv::Entries e;
  e.emplace_back("preset", preset);
  e.emplace_back("input_mode", to_string(input_mode));
  e.emplace_back("lr", kv::from_double(lr));
  e.emplace_back("batch_size", std::to_string(batch_size));
  e.emplace_back("iterations", std::to_string(iterations));
  e.emplace_back("rho", kv::from_double(rho));
  e.emplace_back("eps", kv::from_double(eps));
  e.emplace_back("seed", std::to_string(seed));
  e.emplace_back("frames", std::to_string(frames));
  e.emplace_back("eval_every", std::to_string(eval_every));
  e.emplace_back("val_split", kv::from_double(val_split));
  return kv::format(e);
}

TrainConfig TrainConfig::from_text(std::string_view text) {
  TrainConfig c;
  for (const auto& [key, value] : kv::parse(text)) {
    if (key == "preset") c.preset = value;
    else if (key == "input_mode") c.input_mode = parse_input_mode(value);
    else if (key == "lr") c.lr = kv::to_double(key, value);
    else if (key == "batch_size") c.batch_size = kv::to_int(key, value);
    else if (key == "iterations") c.iterations = kv::to_int(key, value);
    else if (key == "rho") c.rho = kv::to_double(key, value);
    else if (key == "eps") c.eps = kv::to_double(key, value);
    else if (key == "seed") c.seed = kv::to_uint(key, value);
    else if (key == "frames") c.frames = kv::to_int(key, value);
    else if (key == "eval_every") c.eval_every = kv::to_int(key, value);
    else if (key == "val_split") c.val_split = kv::to_double(key, value);
    else throw std::invalid_argument("unknown train config key `" + key + "`");
  }
  c.validate();
  return c;
}

}  // namespace egolstm
