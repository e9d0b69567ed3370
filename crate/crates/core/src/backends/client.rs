use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    cache_key, BackendDescriptor, BackendError, GenerationBackend, GenerationRequest,
    GenerationResponse, ResponseCache,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    /// Retries after the first attempt, for retryable failures only.
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Upper bound on concurrent dispatches to the backend.
    pub max_in_flight: usize,
    /// Token-bucket rate; `None` disables limiting.
    pub requests_per_minute: Option<f64>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            max_retries: 3,
            backoff_base_ms: 200,
            backoff_max_ms: 10_000,
            max_in_flight: 4,
            requests_per_minute: None,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallSource {
    Cache,
    Dispatch,
    /// Waited on an identical request already in flight.
    Coalesced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallOutcome {
    pub response: GenerationResponse,
    pub cache_key: String,
    pub source: CallSource,
}

type Shared = Result<GenerationResponse, BackendError>;

#[derive(Default)]
struct Pending {
    result: Mutex<Option<Shared>>,
    ready: Condvar,
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

struct TokenBucket {
    per_sec: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(per_minute: f64) -> Self {
        let per_sec = per_minute / 60.0;
        let capacity = per_sec.ceil().max(1.0);
        TokenBucket {
            per_sec,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_sec;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_sec)
            };
            thread::sleep(wait);
        }
    }
}

/// Cache-first, coalescing, retrying front end to one generation backend.
/// Safe to share across threads.
pub struct BackendClient {
    backend: Arc<dyn GenerationBackend>,
    config: ClientConfig,
    cache: ResponseCache,
    in_flight: Mutex<HashMap<String, Arc<Pending>>>,
    slots: Slots,
    limiter: Option<TokenBucket>,
    dispatches: AtomicUsize,
}

impl BackendClient {
    pub fn new(backend: Arc<dyn GenerationBackend>, config: ClientConfig) -> std::io::Result<Self> {
        let cache = match &config.cache_dir {
            Some(dir) => ResponseCache::on_disk(dir)?,
            None => ResponseCache::in_memory(),
        };
        Ok(BackendClient {
            slots: Slots {
                free: Mutex::new(config.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            limiter: config.requests_per_minute.map(TokenBucket::new),
            backend,
            config,
            cache,
            in_flight: Mutex::new(HashMap::new()),
            dispatches: AtomicUsize::new(0),
        })
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        self.backend.descriptor()
    }

    pub fn backend_id(&self) -> &str {
        &self.backend.descriptor().backend_id
    }

    pub fn context_limit(&self) -> Option<usize> {
        self.backend.context_limit()
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Number of requests actually sent to the backend (attempts included).
    pub fn dispatch_count(&self) -> usize {
        self.dispatches.load(Ordering::SeqCst)
    }

    pub fn key_for(&self, request: &GenerationRequest) -> String {
        let value = serde_json::to_value(request).expect("requests serialize");
        cache_key(self.backend_id(), &value)
    }

    pub fn call(&self, request: &GenerationRequest) -> Result<CallOutcome, BackendError> {
        let key = self.key_for(request);
        if let Some(hit) = self.cached(&key)? {
            return Ok(CallOutcome {
                response: hit,
                cache_key: key,
                source: CallSource::Cache,
            });
        }

        let (pending, leader) = {
            let mut map = self.in_flight.lock().expect("in-flight lock");
            match map.get(&key) {
                Some(p) => (p.clone(), false),
                None => {
                    let p = Arc::new(Pending::default());
                    map.insert(key.clone(), p.clone());
                    (p, true)
                }
            }
        };

        if !leader {
            let mut slot = pending.result.lock().expect("pending lock");
            while slot.is_none() {
                slot = pending.ready.wait(slot).expect("pending lock");
            }
            return slot.clone().expect("set before notify").map(|response| CallOutcome {
                response,
                cache_key: key,
                source: CallSource::Coalesced,
            });
        }

        // A previous leader may have finished between our cache check and
        // registering as leader.
        let result = match self.cached(&key) {
            Ok(Some(hit)) => Ok((hit, CallSource::Cache)),
            Ok(None) => self
                .dispatch_with_retries(request)
                .and_then(|resp| self.store(&key, request, &resp).map(|_| (resp, CallSource::Dispatch))),
            Err(e) => Err(e),
        };

        *pending.result.lock().expect("pending lock") =
            Some(result.clone().map(|(resp, _)| resp));
        pending.ready.notify_all();
        self.in_flight.lock().expect("in-flight lock").remove(&key);

        result.map(|(response, source)| CallOutcome {
            response,
            cache_key: key,
            source,
        })
    }

    fn cached(&self, key: &str) -> Result<Option<GenerationResponse>, BackendError> {
        match self.cache.get(key) {
            Some(raw) => serde_json::from_str(&raw)
                .map(Some)
                .map_err(|e| BackendError::Protocol(format!("corrupt cache entry {key}: {e}"))),
            None => Ok(None),
        }
    }

    fn store(
        &self,
        key: &str,
        request: &GenerationRequest,
        response: &GenerationResponse,
    ) -> Result<(), BackendError> {
        let req = serde_json::to_value(request).expect("requests serialize");
        let resp = serde_json::to_value(response).expect("responses serialize");
        self.cache
            .put(key, self.backend_id(), &req, &resp)
            .map_err(|e| BackendError::Failed(format!("cache write failed: {e}")))
    }

    fn dispatch_with_retries(
        &self,
        request: &GenerationRequest,
    ) -> Result<GenerationResponse, BackendError> {
        let mut attempt = 0u32;
        loop {
            if let Some(bucket) = &self.limiter {
                bucket.acquire();
            }
            let outcome = {
                let _slot = self.slots.acquire();
                self.dispatches.fetch_add(1, Ordering::SeqCst);
                self.backend.generate(request)
            };
            match outcome {
                Ok(resp) => return Ok(resp),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self
                        .config
                        .backoff_base_ms
                        .saturating_mul(1u64 << attempt.min(20))
                        .min(self.config.backoff_max_ms);
                    log::debug!(
                        "{}: attempt {} failed ({e}); retrying in {delay} ms",
                        self.backend_id(),
                        attempt + 1
                    );
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(BackendError::Unavailable {
                        backend: self.backend_id().to_string(),
                        attempts: attempt + 1,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
