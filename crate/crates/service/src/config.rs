use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use vst_core::analysis::mock::{MockClassifier, MockPhonemizer, MockTranscriber};
use vst_core::analysis::DEFAULT_FAN_OUT;
use vst_core::llm::ChatBackend;
use vst_core::orchestrator::MAX_ROUNDS;
use vst_core::samples::offline_chat;

use crate::remote::{Endpoint, RemoteChat, RemoteClassifier, RemotePhonemizer, RemoteTranscriber};
use crate::service::{Backends, Settings};

/// Every option can also be set through the environment variable shown.
#[derive(Debug, Clone, Parser)]
#[command(name = "vst-server", version, about = "Stuttering analysis and therapy planning service")]
pub struct Config {
    #[arg(long, env = "BIND_ADDR", default_value = "127.0.0.1:8080")]
    pub bind_addr: SocketAddr,

    #[arg(long, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,

    /// Refinement rounds used when a submission does not choose its own.
    #[arg(long, env = "MAX_ROUNDS", default_value_t = 2, value_parser = clap::value_parser!(u32).range(0..=MAX_ROUNDS as i64))]
    pub max_rounds: u32,

    #[arg(long, env = "MAX_MODIFICATIONS", default_value_t = 1)]
    pub max_modifications: u32,

    /// Chat completions endpoint. Unset selects the offline scripted model.
    #[arg(long, env = "LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,

    #[arg(long, env = "LLM_MODEL", default_value = "default")]
    pub llm_model: String,

    #[arg(long, env = "LLM_API_KEY", hide_env_values = true)]
    pub llm_api_key: Option<String>,

    #[arg(long, env = "LLM_TIMEOUT_S", default_value_t = 120)]
    pub llm_timeout_s: u64,

    /// Unset selects the deterministic mock classifier.
    #[arg(long, env = "CLASSIFIER_ENDPOINT")]
    pub classifier_endpoint: Option<String>,

    #[arg(long, env = "CLASSIFIER_API_KEY", hide_env_values = true)]
    pub classifier_api_key: Option<String>,

    /// Unset selects the mock transcriber.
    #[arg(long, env = "ASR_ENDPOINT")]
    pub asr_endpoint: Option<String>,

    #[arg(long, env = "ASR_API_KEY", hide_env_values = true)]
    pub asr_api_key: Option<String>,

    /// Unset selects the mock phonemizer.
    #[arg(long, env = "PHONEMIZER_ENDPOINT")]
    pub phonemizer_endpoint: Option<String>,

    #[arg(long, env = "BACKEND_TIMEOUT_S", default_value_t = 30)]
    pub backend_timeout_s: u64,

    /// Seed for every mock backend.
    #[arg(long, env = "MOCK_SEED", default_value_t = 0)]
    pub mock_seed: u64,

    #[arg(long, env = "FAN_OUT", default_value_t = DEFAULT_FAN_OUT)]
    pub fan_out: usize,
}

impl Config {
    pub fn settings(&self) -> Settings {
        Settings {
            default_rounds: self.max_rounds,
            max_modifications: self.max_modifications,
            fan_out: self.fan_out.max(1),
            ..Settings::default()
        }
    }

    fn endpoint(&self, url: &str, key: &Option<String>, timeout_s: u64) -> Endpoint {
        Endpoint { api_key: key.clone(), timeout: Duration::from_secs(timeout_s), ..Endpoint::new(url) }
    }

    /// Builds each backend once; remote where an endpoint is configured, mock otherwise.
    pub fn backends(&self) -> anyhow::Result<Backends> {
        let http = reqwest::Client::builder().build()?;
        let seed = self.mock_seed;
        let mut b = Backends::mock(seed);
        if let Some(url) = &self.classifier_endpoint {
            let ep = self.endpoint(url, &self.classifier_api_key, self.backend_timeout_s);
            b.classifier = Arc::new(RemoteClassifier::new(http.clone(), ep));
        }
        if let Some(url) = &self.asr_endpoint {
            let ep = self.endpoint(url, &self.asr_api_key, self.backend_timeout_s);
            b.transcriber = Arc::new(RemoteTranscriber::new(http.clone(), ep));
        }
        if let Some(url) = &self.phonemizer_endpoint {
            let ep = self.endpoint(url, &self.asr_api_key, self.backend_timeout_s);
            b.phonemizer = Arc::new(RemotePhonemizer::new(http.clone(), ep));
        }
        if let Some(url) = &self.llm_endpoint {
            let ep = self.endpoint(url, &self.llm_api_key, self.llm_timeout_s);
            let chat: Arc<dyn ChatBackend> = Arc::new(RemoteChat::new(http, ep, self.llm_model.clone()));
            b.chat = Arc::new(move || chat.clone());
        }
        Ok(b)
    }

    pub fn describe_backends(&self) -> String {
        let pick = |o: &Option<String>| if o.is_some() { "remote" } else { "mock" };
        format!(
            "classifier={} asr={} phonemizer={} llm={}",
            pick(&self.classifier_endpoint),
            pick(&self.asr_endpoint),
            pick(&self.phonemizer_endpoint),
            pick(&self.llm_endpoint)
        )
    }
}

impl Backends {
    /// All-mock backends with one seed; chat replies come from the bundled sample plans.
    pub fn mock(seed: u64) -> Self {
        Self {
            classifier: Arc::new(MockClassifier::new(seed)),
            transcriber: Arc::new(MockTranscriber::new(seed)),
            phonemizer: Arc::new(MockPhonemizer::new(seed)),
            chat: Arc::new(move || Arc::new(offline_chat(seed)) as Arc<dyn ChatBackend>),
        }
    }
}
