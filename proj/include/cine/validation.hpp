#pragma once

#include <string>
#include <vector>

namespace cine {

enum class Severity { Warning, Error };

// One validation finding. `path` is a JSON pointer into the offending
// document; `rule` is a short stable identifier for the violated invariant.
struct Finding {
    std::string path;
    Severity severity = Severity::Error;
    std::string rule;
    std::string message;
};

class ValidationReport {
public:
    void add_error(std::string path, std::string rule, std::string message) {
        findings_.push_back({std::move(path), Severity::Error, std::move(rule), std::move(message)});
    }
    void add_warning(std::string path, std::string rule, std::string message) {
        findings_.push_back({std::move(path), Severity::Warning, std::move(rule), std::move(message)});
    }

    const std::vector<Finding>& findings() const { return findings_; }
    bool empty() const { return findings_.empty(); }

    std::size_t error_count() const {
        std::size_t n = 0;
        for (const auto& f : findings_)
            if (f.severity == Severity::Error) ++n;
        return n;
    }
    bool has_errors() const { return error_count() > 0; }

    void merge(const ValidationReport& other) {
        findings_.insert(findings_.end(), other.findings_.begin(), other.findings_.end());
    }

    std::string to_string() const {
        std::string out;
        for (const auto& f : findings_) {
            out += (f.severity == Severity::Error ? "error" : "warning");
            out += " [" + f.rule + "] at " + f.path + ": " + f.message + "\n";
        }
        return out;
    }

private:
    std::vector<Finding> findings_;
};

}  // namespace cine
