//! Shows the chat-completion request an HTTP backend sends, and calls a live
//! endpoint when `STEPRAG_ENDPOINT` is set (token from `STEPRAG_API_TOKEN`).

use steprag::config::TOKEN_ENV_VAR;
use steprag::policy::{
    action_request, HttpBackend, HttpBackendConfig, PolicyBackend, PolicyParams,
};
use steprag::AgentState;

fn main() {
    let endpoint = std::env::var("STEPRAG_ENDPOINT").ok();
    let cfg = HttpBackendConfig {
        endpoint: endpoint
            .clone()
            .unwrap_or_else(|| "http://127.0.0.1:9/v1/chat/completions".into()),
        model: std::env::var("STEPRAG_MODEL").unwrap_or_else(|_| "local-model".into()),
        api_token: std::env::var(TOKEN_ENV_VAR).ok(),
        timeout_secs: 30.0,
        max_retries: 2,
        backoff_base_ms: 250,
        max_in_flight: 4,
    };
    let backend = HttpBackend::new(cfg).expect("client builds");

    let params = PolicyParams {
        seed: Some(7),
        ..PolicyParams::default()
    };
    let request = action_request(
        &AgentState::new("Where was the director of Kaneva born?"),
        &params,
    )
    .expect("reasoning request");
    let body = serde_json::to_string_pretty(&backend.body(&request)).expect("json");
    println!("{body}");

    if endpoint.is_none() {
        println!("\nset STEPRAG_ENDPOINT to send it");
        return;
    }
    match backend.complete(&request) {
        Ok(reply) => println!("\nreply: {reply}"),
        Err(e) => println!("\nrequest failed: {e}"),
    }
    for call in backend.calls() {
        println!("{call:?}");
    }
}
