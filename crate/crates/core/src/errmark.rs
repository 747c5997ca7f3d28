//! Recognizes failure-indicative log lines.
//!
//! Both the failure taxonomy and the log channel keep only lines that look like
//! errors: marker prefixes, structured fatal/error level entries, and
//! exception or stack-trace lines. The set lives here so the two consumers
//! never drift apart.

use once_cell::sync::Lazy;
use regex::Regex;

static MARKERS: Lazy<Vec<Regex>> = Lazy::new(|| {
    [
        // Prefix markers, optionally preceded by a timestamp column.
        r"(?i)^\s*(\[?\d[^ ]*\s+)?(error|fatal|severe|panic)\b",
        r"^\s*E:\s",
        r"^\s*##\[error\]",
        // Structured logging with an error-or-worse level field.
        r#"(?i)\blevel\s*[=:]\s*"?(error|fatal|panic|critical)"?"#,
        r#"(?i)"level"\s*:\s*"(error|fatal|panic|critical)""#,
        // Exceptions and stack traces. No left boundary: exception class
        // names are CamelCase suffixes like SocketException.
        r"(?i)(exception|\btraceback)\b",
        r"^\s*at [\w$.]+\(",
        r"^\s*Caused by:",
        r"(?i)^\s*\w[\w .-]*error\b",
        // Generic failure wording that CI tools print on the failing line.
        r"(?i)\bfail(ed|ure)?\s*[:;!]",
        r"(?i)^\s*\[?(error|fatal)\]?\s*[:\]]",
        // Bracketed level columns (maven) and the hotspot crash banner.
        r"(?i)^\s*\[(error|fatal|severe)\]",
        r"(?i)\bfatal error\b",
        // Mid-line compiler and tool diagnostics: "Widget.java:58: error: ...".
        r"(?i)\berror\b\s*[:=]",
        // Uppercase status token from test runners and build tools.
        r"\bFAILED\b",
        // Hard failure wording that carries no error prefix of its own.
        r"(?i)\b(segmentation fault|core dumped|sigsegv|sigabrt|bus error)\b",
        r"(?i)\b(out of memory|oomkilled|oom-kill)\b",
        r"(?i)\b(permission denied|no such file or directory|read-only file system|no space left on device)\b",
        r"(?i)\bcommand not found\b",
        r"(?i)\btimed out\b",
        r"(?i)\b(could not|cannot|unable to) (resolve|find|connect|open|acquire|locate|download|fetch|stat|create|reserve|access)\b",
        r"(?i)\bviolations were found\b",
        r"(?i)\bdeadlock\b",
        r"(?i)\baddress already in use\b",
        r"(?i)\b(authentication failed|bad credentials|unauthorized)\b",
        r"(?i)\bexceeded the maximum execution time\b",
        r"(?i)\bhas not created any output\b",
        r"(?i)\bexit (code|value) [1-9]\d*\b",
        r"(?i)\bnon-zero exit\b",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("marker pattern"))
    .collect()
});

/// Whether a single log line looks failure-indicative.
pub fn is_failure_indicative(line: &str) -> bool {
    MARKERS.iter().any(|m| m.is_match(line))
}

#[cfg(test)]
mod tests {
    use super::is_failure_indicative;

    #[test]
    fn keeps_error_shapes() {
        for line in [
            "Error: failed to download helm/helm",
            "ERROR compilation failed",
            "E: Unable to locate package libfoo",
            "FATAL: disk full",
            "##[error]Process completed with exit code 1.",
            "time=\"2024-01-01\" level=fatal msg=\"boom\"",
            "{\"level\":\"error\",\"msg\":\"no route\"}",
            "java.net.SocketException: Connection reset",
            "    at org.acme.Widget.run(Widget.java:42)",
            "Caused by: java.io.IOException",
            "Traceback (most recent call last):",
            "BUILD FAILED: task :compileJava",
            "[2024-03-01T10:00:00Z] ERROR request timed out",
            "[ERROR] Tests run: 12, Failures: 1, Errors: 0, Skipped: 0",
            "[ERROR] COMPILATION ERROR :",
            "# A fatal error has been detected by the Java Runtime Environment:",
            "Widget.java:58: error: cannot find symbol",
            "WidgetReconcilerTest > retriesUntilQuorum() FAILED",
            "Segmentation fault (core dumped)",
            "bash: line 1: sbt: command not found",
            "Could not resolve all files for configuration ':app:compileClasspath'.",
            "stage.sh: line 3: /opt/tooling/bin/deploy: Permission denied",
            "> Checkstyle rule violations were found.",
            "Process 'Gradle Test Executor 4' finished with non-zero exit value 134",
        ] {
            assert!(is_failure_indicative(line), "should keep: {line}");
        }
    }

    #[test]
    fn drops_routine_output() {
        for line in [
            "INFO downloading dependencies",
            "Compiling widget v0.1.0",
            "Tests run: 52, Failures: 0, Errors: 0, Skipped: 1",
            "[debug] cache hit",
            "Downloading https://repo.maven.apache.org/maven2/",
            "",
        ] {
            assert!(!is_failure_indicative(line), "should drop: {line}");
        }
    }
}
