// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <sys/resource.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli_pipeline.hpp"
#include "datasets.hpp"
#include "kbstab/change_analysis.hpp"
#include "kbstab/feature_extraction.hpp"
#include "kbstab/ingest.hpp"
#include "kbstab/predictor.hpp"
#include "kbstab/stability_filters.hpp"
#include "kbstab/temporal_density.hpp"
#include "kbstab/test_harness.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "support.hpp"

using namespace kbstab;
using namespace kbstab::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Collects failed expectations; the first few are reported.
class Outcome {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) failed_.push_back(what);
  }
  void note(const std::string& text) { notes_.push_back(text); }
  bool passed() const { return failures_ == 0; }
  std::string detail() const {
    std::string s;
    for (const auto& n : notes_) s += (s.empty() ? "" : "; ") + n;
    for (const auto& f : failed_) s += (s.empty() ? "" : "; ") + ("failed: " + f);
    if (failures_ > 3) s += "; " + std::to_string(failures_ - 3) + " more failures";
    return s;
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> failed_;
  std::vector<std::string> notes_;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

void synthetic_criteria(Outcome& o) {
  const auto start = Clock::now();
  GeneratorConfig c;
  c.entity_count = 2000;
  c.seed = 2024;
  const auto g = generate(c);
  const Interval iv(c.tau1, c.tau2);
  const auto records = analyze_snapshots(g.before, g.after, iv, Criterion::timestamp);
  const auto evals = evaluate_criteria(records, g.gold);
  const auto& ts_ev = evals.at(0).binary;
  o.expect(ts_ev.precision == 1.0, "timestamp precision " + fmt(ts_ev.precision));
  o.expect(ts_ev.recall == 1.0, "timestamp recall " + fmt(ts_ev.recall));

  std::size_t checked = 0;
  for (const auto& l : g.gold) {
    const auto before = project(g.before, l.subject, l.property);
    const auto after = project(g.after, l.subject, l.property);
    const std::string pair = l.subject.str() + "/" + l.property.str();
    o.expect(pca_criterion(before, after) == oracle_pca(before, after), "pca on " + pair);
    o.expect(bulk_criterion(before, after) == oracle_bulk(before, after), "bulk on " + pair);
    o.expect(timestamp_criterion(after, iv) == oracle_timestamp(after, c.tau1, c.tau2), "timestamp on " + pair);
    ++checked;
  }
  for (const auto& r : records) {
    const auto before = project(g.before, r.subject, r.property);
    const auto after = project(g.after, r.subject, r.property);
    o.expect(r.signals.pca == oracle_pca(before, after), "pca signal on " + r.subject.str());
    o.expect(r.signals.bulk == oracle_bulk(before, after), "bulk signal on " + r.subject.str());
  }

  const auto fixture = analyze_snapshots(load_snapshot(data_path("changes20_t1.tsv")),
                                         load_snapshot(data_path("changes20_t2.tsv")),
                                         Interval(ts("2017"), ts("2020")), Criterion::timestamp);
  const auto fe = evaluate_criteria(fixture, load_labels(data_path("changes20_gold.tsv")));
  const auto counts = [](const BinaryMetrics& m) {
    return std::vector<std::size_t>{m.counts.tp, m.counts.fp, m.counts.fn, m.counts.tn};
  };
  o.expect(counts(fe.at(0).binary) == std::vector<std::size_t>{8, 0, 2, 10}, "fixture timestamp counts");
  o.expect(counts(fe.at(1).binary) == std::vector<std::size_t>{7, 5, 3, 5}, "fixture pca counts");
  o.expect(counts(fe.at(2).binary) == std::vector<std::size_t>{8, 3, 2, 7}, "fixture bulk counts");
  o.expect(fe.at(0).binary.precision == 1.0 && near(fe.at(0).binary.recall, 0.8, 1e-15) &&
               near(fe.at(0).binary.f1, 16.0 / 18.0, 1e-15),
           "fixture timestamp P/R/F1");
  o.expect(near(fe.at(1).binary.precision, 7.0 / 12.0, 1e-15) && near(fe.at(1).binary.recall, 0.7, 1e-15) &&
               near(fe.at(1).binary.f1, 7.0 / 11.0, 1e-15),
           "fixture pca P/R/F1");
  o.expect(near(fe.at(2).binary.precision, 8.0 / 11.0, 1e-15) && near(fe.at(2).binary.recall, 0.8, 1e-15) &&
               near(fe.at(2).binary.f1, 16.0 / 21.0, 1e-15),
           "fixture bulk P/R/F1");

  const double elapsed = seconds_since(start);
  o.expect(elapsed < 30.0, "runtime " + fmt(elapsed, 2) + " s");
  o.note(std::to_string(checked) + " pairs, timestamp P=" + fmt(ts_ev.precision) + " R=" + fmt(ts_ev.recall) + ", " +
         fmt(elapsed, 2) + " s");
}

void micro_examples(Outcome& o) {
  const Interval iv(ts("2017"), ts("2020"));
  const Snapshot k2017(ts("2017"), {fact("Q11571", "P551", "Q2807", "2010", "2012")});
  const auto residence = project(k2017, EntityId("Q11571"), PropertyId("P551"));
  o.expect(residence.size() == 1 && residence.records()[0] == erec("Q2807", "2010", "2012"), "residence projection");

  const auto juve = classify(state("Q11571", "P54", {erec("Q8682", "2009", "2010")}),
                             state("Q11571", "P54", {erec("Q8682", "2009", "2010"), erec("Q1422", "2018", "2018-07-10")}),
                             iv, Criterion::timestamp);
  o.expect(juve.label == ChangeLabel::real_world && juve.signals.timestamp, "team change is real-world");

  const auto siblings = classify(state("Q_john", "P3373", {}),
                                 state("Q_john", "P3373",
                                       {erec("Q_maria", "", "2019-05-01"), erec("Q_anna", "", "2019-05-01"),
                                        erec("Q_julian", "", "2019-05-01"), erec("Q_roger", "", "2019-05-01")}),
                                 iv, Criterion::timestamp);
  o.expect(siblings.label == ChangeLabel::completion, "siblings are a completion");
  o.expect(siblings.diff.added.size() == 4, "four siblings added");

  const auto uk = classify(state("Q_john", "P27", {erec("Q_uk")}), state("Q_john", "P27", {erec("Q_britain")}), iv,
                           Criterion::timestamp);
  o.expect(uk.label == ChangeLabel::correction, "citizenship rename is a correction");

  const auto teams = state("Q11571", "P54",
                           {erec("Q18656", "2002"), erec("Q18741", "2003"), erec("Q8682", "2009"), erec("Q1422", "2018")});
  o.expect(inter_change_times(teams).gaps == std::vector<double>{1.0, 6.0, 9.0}, "inter-change times");
}

void tfidf_oracle(Outcome& o) {
  const auto corpus = load_articles(data_path("tfidf_corpus.tsv"));
  o.expect(corpus.size() == 10, "corpus has 10 documents");
  std::vector<std::string> texts;
  for (const auto& a : corpus) texts.push_back(a.text);
  double worst = 0.0, worst_norm = 0.0;
  for (const NgramRange range : {NgramRange{1, 1}, NgramRange{1, 2}, NgramRange{1, 3}}) {
    const auto vocab = fit_vocabulary(std::span<const ArticleVersion>(corpus), range, 1);
    for (std::size_t d = 0; d < texts.size(); ++d) {
      const auto x = vectorize_tfidf(corpus[d].entity, texts[d], vocab);
      const auto oracle = oracle_tfidf(texts, d, range.low, range.high);
      std::size_t found = 0;
      for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto it = oracle.find(std::string(vocab.terms()[i]));
        const double expected = it == oracle.end() ? 0.0 : it->second;
        found += it == oracle.end() ? 0 : 1;
        worst = std::max(worst, std::abs(x.value_at(i) - expected));
      }
      o.expect(found == oracle.size(), "oracle term missing from vocabulary");
      if (!x.entries.empty()) worst_norm = std::max(worst_norm, std::abs(x.norm() - 1.0));
    }
  }
  o.expect(worst <= 1e-9, "component error " + sci(worst));
  o.expect(worst_norm <= 1e-12, "norm error " + sci(worst_norm));
  o.note("max component error " + sci(worst) + ", max norm error " + sci(worst_norm));
}

void logistic_numerics(Outcome& o) {
  Rng rng(71);
  const auto ds = random_dataset(rng, 60, 6, 1.0);
  const LogisticObjective obj(ds.rows, 6, 1.0);
  std::vector<double> p(obj.parameter_count()), g(p.size());
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    for (auto& v : p) v = 2.0 * rng.normal();
    obj.value_and_gradient(p, g);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double h = 1e-6;
      auto a = p, b = p;
      a[i] += h;
      b[i] -= h;
      const double numeric = (obj.value(a) - obj.value(b)) / (2 * h);
      worst = std::max(worst, std::abs(numeric - g[i]) / std::max(1.0, std::abs(g[i])));
    }
  }
  o.expect(worst <= 1e-5, "gradient relative error " + sci(worst));

  const auto m1 = train(ds, {1.0, 1e-8, 1000, 1});
  const auto m2 = train(ds, {1.0, 1e-8, 1000, 2});
  for (const auto* m : {&m1, &m2}) {
    for (std::size_t i = 1; i < m->loss_history.size(); ++i) {
      o.expect(m->loss_history[i] <= m->loss_history[i - 1], "loss increased at step " + std::to_string(i));
    }
  }
  double gap = std::abs(m1.bias - m2.bias);
  for (std::size_t i = 0; i < m1.weights.size(); ++i) gap = std::max(gap, std::abs(m1.weights[i] - m2.weights[i]));
  o.expect(gap <= 1e-4, "seed weight gap " + sci(gap));
  o.note("gradient rel. error " + sci(worst) + ", seed gap " + sci(gap));
}

bool has_signal_token(const Inspection& ins) {
  const TextConfig defaults;
  return std::any_of(ins.positive.begin(), ins.positive.end(), [&](const auto& p) {
    return std::find(defaults.signal_tokens.begin(), defaults.signal_tokens.end(), p.first) !=
           defaults.signal_tokens.end();
  });
}

void planted_signal(Outcome& o) {
  const auto strong = planted_signal_run(0.9, 1200, 7, 0.4, 500);
  o.expect(strong.dataset.rows.size() == 1000, "dataset has " + std::to_string(strong.dataset.rows.size()) + " rows");
  const auto positives = std::count_if(strong.dataset.rows.begin(), strong.dataset.rows.end(),
                                       [](const auto& r) { return r.target == 1; });
  o.expect(positives == 500, "dataset is not balanced");
  o.expect(strong.report.metrics.f1 >= 0.90, "F1 at rate 0.9 is " + fmt(strong.report.metrics.f1));
  o.expect(strong.inspection.positive.size() == 5 && has_signal_token(strong.inspection), "no signal token in top 5");

  const auto blank = planted_signal_run(0.0, 1200, 7, 0.4, 500);
  o.expect(blank.report.metrics.f1 >= 0.40 && blank.report.metrics.f1 <= 0.60,
           "F1 at rate 0 is " + fmt(blank.report.metrics.f1));
  o.note("F1 " + fmt(strong.report.metrics.f1) + " at rate 0.9 (top token '" +
         (strong.inspection.positive.empty() ? "" : strong.inspection.positive[0].first) + "'), " +
         fmt(blank.report.metrics.f1) + " at rate 0");
}

void knn_feature(Outcome& o) {
  const auto emb = planted_embeddings(50, 8, 61);
  const auto scaled = emb.scaled(3.7);
  std::vector<ReferenceLabel> ref;
  for (std::size_t i = 0; i < 50; ++i) ref.push_back({EntityId("Q" + std::to_string(i)), i % 2 == 0});
  for (std::size_t k : {1u, 5u, 10u}) {
    for (const auto& r : ref) {
      const double got = knn_change_fraction(r.entity, emb, ref, k);
      o.expect(got == brute_knn(r.entity, emb, ref, k), "k=" + std::to_string(k) + " on " + r.entity.str());
      o.expect(knn_change_fraction(r.entity, scaled, ref, k) == got, "scaled k=" + std::to_string(k));
    }
  }
}

void property_filter(Outcome& o) {
  std::vector<Fact> facts;
  std::vector<EntityId> cls;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::string s = "Q" + std::to_string(1000 + i);
    cls.emplace_back(s);
    facts.push_back(fact(s, "P1", "Q1", "", "2015"));
    if (i < 6) facts.push_back(fact(s, "P1", "Q2", "", "2015"));
  }
  const Snapshot snap(ts("2020"), facts);
  o.expect(property_is_unstable(cls, PropertyId("P1"), ChangeMeasure::object_multiplicity, snap, 0.05).unstable,
           "unstable at 0.05");
  o.expect(!property_is_unstable(cls, PropertyId("P1"), ChangeMeasure::object_multiplicity, snap, 0.07).unstable,
           "stable at 0.07");

  const auto fsnap = load_snapshot(data_path("proplabels_snapshot.tsv"));
  const auto fcls = load_entity_list(data_path("proplabels_class.txt"));
  const auto gold = load_property_labels(data_path("proplabels_gold.tsv"));
  std::map<PropertyId, bool> predicted;
  for (const auto& [p, _] : gold) {
    predicted[p] = property_is_unstable(fcls, p, ChangeMeasure::object_multiplicity, fsnap, 0.05).unstable;
  }
  const auto m = evaluate_filter(predicted, gold);
  o.expect(m.counts.tp == 5 && m.counts.fp == 1 && m.counts.fn == 0 && m.counts.tn == 9, "fixture confusion matrix");
  o.expect(near(m.precision, 5.0 / 6.0, 1e-15) && m.recall == 1.0 && near(m.f1, 10.0 / 11.0, 1e-15),
           "fixture P/R/F1");
}

void density(Outcome& o) {
  Rng rng(103);
  double worst = 0.0;
  for (int round = 0; round < 20; ++round) {
    std::vector<double> xs(2 + rng.below(300));
    for (auto& x : xs) x = 0.1 + std::abs(rng.normal()) * 5.0;
    const auto d = kde(xs);
    const auto& gx = d.grid();
    const auto& gy = d.grid_density();
    double area = 0.0;
    for (std::size_t i = 1; i < gx.size(); ++i) area += 0.5 * (gy[i] + gy[i - 1]) * (gx[i] - gx[i - 1]);
    worst = std::max(worst, std::abs(area - 1.0));
  }
  o.expect(worst <= 1e-3, "normalization error " + sci(worst));

  const std::vector<double> two{1.0, 3.0};
  const double f2 = kde(two, 1.0).density(2.0);
  o.expect(near(f2, 0.2420, 1e-4), "f(2) = " + std::to_string(f2));

  const double c = 10.0;
  const std::vector<double> sym{c - 3.5, c - 1.0, c - 0.25, c, c + 0.25, c + 1.0, c + 3.5};
  const auto ds = kde(sym);
  double asym = 0.0;
  for (double x = 0.0; x < 8.0; x += 0.173) asym = std::max(asym, std::abs(ds.density(c + x) - ds.density(c - x)));
  o.expect(asym <= 1e-10, "asymmetry " + sci(asym));
  o.note("normalization error " + sci(worst) + ", f(2) = " + fmt(f2, 6));
}

// 100k entities x 10 properties with one record each; every tenth pair
// gains a dated record in the later snapshot.
std::string scale_snapshot(bool later) {
  std::string out = later ? "#snapshot\t2020-01-01\ty\n" : "#snapshot\t2017-01-01\ty\n";
  out.reserve(48u * 1'100'000u);
  std::size_t pair = 0;
  for (int e = 0; e < 100000; ++e) {
    const std::string s = "Q" + std::to_string(1000000 + e);
    for (int p = 0; p < 10; ++p, ++pair) {
      const std::string prop = "P" + std::to_string(100 + p);
      out += s + "\t" + prop + "\tentity\tQ" + std::to_string(pair % 5000) + "\t2010-01-01\ty\t2012-01-01\ty\n";
      if (later && pair % 10 == 0) {
        out += s + "\t" + prop + "\tentity\tQ" + std::to_string(7000 + pair % 97) + "\t2018-01-01\ty\t2018-06-01\td\n";
      }
    }
  }
  return out;
}

void performance(Outcome& o) {
  const std::string t1_text = scale_snapshot(false);
  const std::string t2_text = scale_snapshot(true);

  auto start = Clock::now();
  const auto t1 = parse_snapshot(t1_text, "t1");
  const double parse_s = seconds_since(start);
  const auto t2 = parse_snapshot(t2_text, "t2");
  const double rate = static_cast<double>(t1.size()) / parse_s;
  o.expect(t1.size() == 1'000'000, "t1 has " + std::to_string(t1.size()) + " facts");
  o.expect(rate >= 100000.0, "ingest " + fmt(rate, 0) + " facts/s");

  start = Clock::now();
  const auto records = analyze_snapshots(t1, t2, Interval(ts("2017"), ts("2020")), Criterion::timestamp);
  const double diff_s = seconds_since(start);
  o.expect(records.size() == 100000, std::to_string(records.size()) + " changed pairs");
  o.expect(diff_s < 10.0, "diff " + fmt(diff_s, 2) + " s");

  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  const double peak_mb = static_cast<double>(usage.ru_maxrss) / 1024.0;
  o.expect(peak_mb < 2048.0, "peak memory " + fmt(peak_mb, 0) + " MB");
  o.note("ingest " + fmt(rate, 0) + " facts/s, diff " + fmt(diff_s, 2) + " s, peak RSS " + fmt(peak_mb, 0) + " MB");
}

void determinism(Outcome& o) {
  const auto root = std::filesystem::temp_directory_path() / ("kbstab_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(root);
  const auto a = run_fixture_pipeline(root / "a", 42);
  const auto b = run_fixture_pipeline(root / "b", 42);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = slurp(a[i]);
    o.expect(!x.empty() && x == slurp(b[i]), a[i].filename().string() + " differs");
  }
  o.note(std::to_string(a.size()) + " CSV outputs compared");
  std::filesystem::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"criterion correctness on the synthetic oracle", synthetic_criteria},
      {"worked micro-examples", micro_examples},
      {"tf-idf oracle equivalence", tfidf_oracle},
      {"logistic regression numerics", logistic_numerics},
      {"planted-signal recovery", planted_signal},
      {"kNN change fraction", knn_feature},
      {"property stability filter", property_filter},
      {"kernel density estimate", density},
      {"diff and ingest performance", performance},
      {"pipeline determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    if (!o.passed()) ++failed;
    const auto detail = o.detail();
    std::printf("%s %2zu %s%s\n", o.passed() ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                detail.empty() ? "" : (" (" + detail + ")").c_str());
    std::fflush(stdout);
  }
  return failed;
}
