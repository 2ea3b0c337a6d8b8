use serde::{Deserialize, Serialize};

/// System prompt for 5W1H analysis and claim extraction.
pub const SYSTEM_PROMPT: &str = r#"You are an AI assistant that analyzes social media posts to extract factual claims. For each post, you will analyze it using the WH questions framework and extract the main factual claim. Make sure to reflect same language the post is mentioned in. If the post is in Hindi, respond in Hindi. Your output must be valid JSON with the following structure:

{
  "what": "Subject or topic of the post",
  "who": "Key individuals, organizations, or groups mentioned",
  "where": "Location information (if mentioned)",
  "when": "Time information (if mentioned)",
  "how": "Process information (if described)",
  "why": "Reason or motivation information (if explained)",
  "claim": "The single main factual crisp claim made in the post within 10-15 words"
}
If information for a particular field is not available, use an empty string. Also if information is not clearly written, don't assume anything from your end. Always stick to the post, don't add anything from your end. Keep things concise."#;

/// User prompt template; `{post}` is replaced by the post text.
pub const USER_TEMPLATE: &str = r#"Carefully analyze the following social media post and answer each question thoughtfully to identify the main factual claim:

Post: {post}

Please answer each of these questions, based only on what is stated in the post:
1. What is the subject/topic of the post?
2. Who is the post talking about (key individuals, organizations, or groups)?
3. Where is this situation taking place (if mentioned)?
4. When did this situation take place (if mentioned)?
5. How did the situation take place (if described)?
6. Why did the situation take place (if explained)?

After answering these questions, extract the main factual claim being made in the post in a single, clear, concise sentence.

Provide your response in the specified JSON format:
{
  "what": "...",
  "who": "...",
  "where": "...",
  "when": "...",
  "how": "...",
  "why": "...",
  "claim": "..."
}"#;

/// Minimal claim-only system prompt (no structured reasoning).
pub const PLAIN_SYSTEM_PROMPT: &str = r#"You are an AI assistant that analyzes social media posts to extract factual claims. Make sure to reflect same language the post is mentioned in. Your output must be valid JSON with the following structure:

{
  "claim": "The single main factual crisp claim made in the post within 10-15 words"
}
Always stick to the post, don't add anything from your end. Keep things concise."#;

/// Claim-only user template; `{post}` is replaced by the post text.
pub const PLAIN_USER_TEMPLATE: &str = r#"Extract the main factual claim being made in the following social media post in a single, clear, concise sentence.

Post: {post}

Provide your response in the specified JSON format:
{
  "claim": "..."
}"#;

pub(crate) const PLACEHOLDER: &str = "{post}";

/// Shape of the answer a prompt asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedFormat {
    /// All seven 5W1H keys.
    Json5w1h,
    /// Only the `claim` key.
    JsonClaim,
}

/// A ready-to-send system/user message pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub expected_format: ExpectedFormat,
}

pub(crate) fn fill(template: &str, post_text: &str) -> String {
    template.replacen(PLACEHOLDER, post_text, 1)
}

/// The 5W1H analysis prompt for a single post.
pub fn build_5w1h_messages(post_text: &str) -> PromptBundle {
    PromptBundle {
        system: SYSTEM_PROMPT.to_string(),
        user: fill(USER_TEMPLATE, post_text),
        expected_format: ExpectedFormat::Json5w1h,
    }
}

/// The claim-only prompt for a single post.
pub fn build_plain_messages(post_text: &str) -> PromptBundle {
    PromptBundle {
        system: PLAIN_SYSTEM_PROMPT.to_string(),
        user: fill(PLAIN_USER_TEMPLATE, post_text),
        expected_format: ExpectedFormat::JsonClaim,
    }
}
