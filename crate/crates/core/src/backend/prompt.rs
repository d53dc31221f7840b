//! The two labeler prompts.

pub const INITIAL_PROMPT: &str =
    "Describe the auditory scene using word pairs. Separate each pair with a comma.";

const COMPOSITE_PREFIX: &str = "Provide a short sentence to describe this set of audio samples. \
The frequency distribution of individual labels for this set of audio samples is provided: ";

pub const DISTRIBUTION_OPEN: &str = "<distribution>";
pub const DISTRIBUTION_CLOSE: &str = "</distribution>";

pub fn initial_prompt() -> &'static str {
    INITIAL_PROMPT
}

/// Wraps a rendered distribution vector in the cluster-naming prompt.
pub fn composite_prompt(distribution_text: &str) -> Result<String, EmptyDistribution> {
    if distribution_text.trim().is_empty() {
        return Err(EmptyDistribution);
    }
    Ok(format!(
        "{COMPOSITE_PREFIX}{DISTRIBUTION_OPEN}{distribution_text}{DISTRIBUTION_CLOSE}."
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("distribution text is empty")]
pub struct EmptyDistribution;
