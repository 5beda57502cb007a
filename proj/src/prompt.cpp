#include <algorithm>
#include <cctype>

#include "labmate/errors.hpp"
#include "labmate/reasoning.hpp"
#include "labmate/text.hpp"

namespace labmate {
namespace {

constexpr std::string_view kEnDash = "\xE2\x80\x93";

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) {
      out += (i + 1 == names.size()) ? " and " : ", ";
    }
    out += names[i];
  }
  return out;
}

std::string meters(double d) { return text::fixed(d, 2) + " m"; }

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  std::size_t pos() const { return pos_; }
  std::string_view rest() const { return s_.substr(pos_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void keyword(std::string_view word) {
    skip_ws();
    if (s_.size() - pos_ < word.size()) fail("expected '" + std::string(word) + "'");
    for (std::size_t i = 0; i < word.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(s_[pos_ + i])) != word[i]) {
        fail("expected '" + std::string(word) + "'");
      }
    }
    pos_ += word.size();
  }

  void punct(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool yes_no() {
    skip_ws();
    const auto word_at = [&](std::string_view w) {
      if (s_.size() - pos_ < w.size()) return false;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s_[pos_ + i])) != w[i]) return false;
      }
      const std::size_t end = pos_ + w.size();
      return end == s_.size() || !std::isalpha(static_cast<unsigned char>(s_[end]));
    };
    if (word_at("yes")) {
      pos_ += 3;
      return true;
    }
    if (word_at("no")) {
      pos_ += 2;
      return false;
    }
    fail("expected Yes or No");
  }

  [[noreturn]] void fail(const std::string& reason) const {
    throw ParseError(pos_, reason, std::string(s_));
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

VlmResponse parse_strict(std::string_view raw) {
  Cursor c(raw);
  VlmResponse out;
  c.keyword("obstruction");
  c.punct(':');
  out.obstruction = c.yes_no();
  c.punct(';');
  c.keyword("interaction");
  c.punct(':');
  out.interaction = c.yes_no();
  c.punct(';');
  c.keyword("message");
  c.punct(':');
  out.message = std::string(text::trim(c.rest()));
  out.raw = std::string(raw);
  return out;
}

VlmResponse parse_lenient(std::string_view raw) {
  std::vector<bool> answers;
  std::string word;
  const auto flush = [&] {
    if (word == "yes") answers.push_back(true);
    if (word == "no") answers.push_back(false);
    word.clear();
  };
  for (unsigned char ch : raw) {
    if (std::isalpha(ch)) {
      word.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      flush();
    }
  }
  flush();
  if (answers.size() < 2) {
    throw ParseError(raw.size(), "fewer than two yes/no answers", std::string(raw));
  }
  VlmResponse out;
  out.obstruction = answers[0];
  out.interaction = answers[1];
  const std::string lower = text::to_lower(raw);
  if (const auto at = lower.find("message:"); at != std::string::npos) {
    out.message = std::string(text::trim(raw.substr(at + 8)));
  }
  out.raw = std::string(raw);
  return out;
}

}  // namespace

std::string_view to_string(PromptVariant variant) {
  return variant == PromptVariant::VisionOnly ? "vision" : "vision+depth";
}

PromptVariant parse_variant(std::string_view name) {
  const std::string lower = text::to_lower(name);
  if (lower == "vision") return PromptVariant::VisionOnly;
  if (lower == "vision+depth" || lower == "depth") return PromptVariant::VisionPlusDepth;
  throw ConfigError("unknown prompt variant '" + std::string(name) + "'");
}

PromptBundle build_prompt(const Scene& scene, const DistanceReport& report,
                          PromptVariant variant, const RuleConfig& rules) {
  if (scene.objects.empty()) {
    throw EmptyScene();
  }
  PromptBundle bundle;
  bundle.image_ref = scene.image_ref;
  bundle.distances_included = variant == PromptVariant::VisionPlusDepth;

  std::vector<std::string> names;
  std::vector<std::string> equipment;
  for (const auto& o : scene.objects) {
    bundle.labels.push_back(o.label);
    names.push_back(o.name());
    if (is_equipment(o.label)) equipment.push_back(o.name());
  }

  std::string& t = bundle.text;
  t = "This scene contains the following objects: " + join_names(names) + ".";

  if (bundle.distances_included) {
    std::vector<std::string> pairs;
    const auto& node_names = report.names();
    for (std::size_t i = 0; i < node_names.size(); ++i) {
      for (std::size_t j = i + 1; j < node_names.size(); ++j) {
        const auto& [a, b] = std::minmax(node_names[i], node_names[j]);
        pairs.push_back(a + std::string(kEnDash) + b + ": " + meters(report.at(i, j)));
      }
    }
    std::sort(pairs.begin(), pairs.end());
    std::string joined;
    for (const auto& p : pairs) joined += (joined.empty() ? "" : "; ") + p;
    if (!joined.empty()) {
      t += " The distances between these objects are: " + joined + ".";
    }
    if (scene.goal) {
      std::vector<std::string> path;
      for (const auto& h : report.humans()) {
        const double d =
            point_segment_distance(report.positions()[h.node], Position3{}, *scene.goal);
        path.push_back(node_names[h.node] + std::string(kEnDash) + "path: " + meters(d));
      }
      std::sort(path.begin(), path.end());
      if (!path.empty()) {
        std::string joined_path;
        for (const auto& p : path) joined_path += (joined_path.empty() ? "" : "; ") + p;
        t += " The distances from each human to the robot's path are: " + joined_path + ".";
      }
    }
  }

  t += " Is the human obstructing the path and/or interacting with the equipment (" +
       (equipment.empty() ? std::string("none") : join_names(equipment)) +
       ")? Respond with Yes or No.";

  if (bundle.distances_included) {
    t += " Rules: a human closer than " + meters(rules.t_interact_m) +
         " to a piece of equipment is interacting with it.";
    if (scene.goal) {
      t += " A human closer than " + meters(rules.corridor_halfwidth_m) +
           " to the robot's path is obstructing the path.";
    } else if (rules.t_obstruct_m) {
      t += " A human closer than " + meters(*rules.t_obstruct_m) +
           " to the robot is obstructing the path.";
    }
    t += " A human interacting with equipment is also obstructing the path.";
  }

  t += " Answer in the form: Obstruction: <Yes|No>; Interaction: <Yes|No>; Message: <a short "
       "message to the human, or nothing>.";
  return bundle;
}

std::string format_response(bool obstruction, bool interaction, std::string_view message) {
  std::string out = std::string("Obstruction: ") + (obstruction ? "Yes" : "No") +
                    "; Interaction: " + (interaction ? "Yes" : "No") + "; Message:";
  if (!message.empty()) {
    out += " ";
    out += message;
  }
  return out;
}

VlmResponse parse_response(std::string_view raw, const ParseOptions& options) {
  try {
    return parse_strict(raw);
  } catch (const ParseError&) {
    if (!options.lenient) throw;
  }
  return parse_lenient(raw);
}

}  // namespace labmate
