//! Holds the `acceptance` integration test target, which exercises the
//! library and the `antsearch` binary end to end.
