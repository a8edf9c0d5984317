use std::sync::{Arc, Mutex};

use super::{ChatBackend, ChatOutput, ChatRequest, ProviderError};

/// Every chat request that passed through a capturing handle, in call order.
#[derive(Debug, Clone, Default)]
pub struct PromptLog(Arc<Mutex<Vec<ChatRequest>>>);

impl PromptLog {
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.0.lock().expect("prompt log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("prompt log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.0.lock().expect("prompt log poisoned").clear();
    }

    fn push(&self, req: &ChatRequest) {
        self.0.lock().expect("prompt log poisoned").push(req.clone());
    }
}

pub(super) struct CapturingChat {
    pub inner: Arc<dyn ChatBackend>,
    pub log: PromptLog,
}

impl ChatBackend for CapturingChat {
    fn complete(&self, req: &ChatRequest) -> Result<ChatOutput, ProviderError> {
        self.log.push(req);
        self.inner.complete(req)
    }
}
