// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/common.hpp>
#include <agentml/synthetic.hpp>
#include <agentml/task.hpp>

#include <atomic>
#include <string>
#include <unistd.h>

namespace agentml::test
{

inline const fs::path kSourceDir = AGENTML_SOURCE_DIR;

// Fresh directory under the system temp dir, removed at scope exit.
class TempDir
{
  public:
    explicit TempDir(std::string_view tag = "t")
    {
        static std::atomic<int> counter { 0 };
        _path = fs::temp_directory_path()
              / fmt_name(tag, static_cast<long>(::getpid()), counter.fetch_add(1));
        fs::remove_all(_path);
        fs::create_directories(_path);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return _path; }
    fs::path operator/(std::string_view leaf) const { return _path / leaf; }

  private:
    static std::string fmt_name(std::string_view tag, long pid, int n)
    {
        return "agentml-test-" + std::string(tag) + "-" + std::to_string(pid) + "-" + std::to_string(n);
    }
    fs::path _path;
};

// Synthetic task with a hand-written table and no failure risk.
inline TaskPtr scripted_task(const fs::path& dir,
                             std::string id,
                             int beta,
                             double m_init,
                             double m_best,
                             std::vector<std::pair<std::string, double>> deltas,
                             std::string metric_name = "Accuracy")
{
    SyntheticConfig c;
    c.task_id = std::move(id);
    c.metric.name = std::move(metric_name);
    c.metric.beta = beta;
    c.metric.m_init = m_init;
    c.metric.m_best = m_best;
    c.metric.marker = MetricSpec::default_marker(c.metric.name);
    c.problem_text = "Improve the validation " + c.metric.name + " of train.py.";
    for (auto& [kw, d]: deltas)
        c.techniques.push_back({ kw, d, 0.0, 0.0 });
    return std::make_shared<const TaskSpec>(make_synthetic_task(7, c, dir / c.task_id));
}

} // namespace agentml::test
