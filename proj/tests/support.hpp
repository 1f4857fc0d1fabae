#pragma once

// Shared builders for the test suites.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "simeval/core.hpp"
#include "simeval/corpus.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(SIMEVAL_FIXTURE_DIR) / name;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("simeval-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

/// Alternating dialogue with `pairs` (tutor, student) pairs; tutor speaks first unless
/// `student_first`, and a closing tutor turn is appended.
inline simeval::Dialogue make_dialogue(const std::string& id, int pairs, bool student_first = false) {
    using namespace simeval;
    Dialogue d;
    d.id = id;
    d.split = Split::test;
    d.subjects = {"Adding fractions", std::string(kDefaultKc)};
    d.question.stem = "What is 1/2 + 1/3?";
    d.question.options = {"2/5", "5/6", "1/6", "2/6"};
    d.question.correct_option = 2;
    int idx = 0;
    if (student_first) d.turns.push_back({idx++, Speaker::student, "hi, I need help with " + id});
    for (int p = 0; p < pairs; ++p) {
        d.turns.push_back({idx++, Speaker::tutor, "Tutor step " + std::to_string(p) + " for " + id + "?"});
        d.turns.push_back({idx++, Speaker::student, "student answer " + std::to_string(p) + " is " +
                                                        std::to_string(p % 3 == 0 ? 5 : p) + "/6"});
    }
    d.turns.push_back({idx++, Speaker::tutor, "Well done, " + id + "."});
    return d;
}

}  // namespace testing
