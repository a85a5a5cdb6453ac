//! Std companion to `catlab-core`: bank and log file formats, the HTTP
//! chat-completions respondent, the threaded study runner and the CLI.

pub mod bankio;
pub mod cli;
pub mod digest;
pub mod llm;
pub mod respondents;
pub mod sessionlog;
pub mod study;
pub mod summary;
