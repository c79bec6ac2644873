use serde::{Deserialize, Serialize};

/// Abstract cost accounting for a distillation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCounters {
    /// Teacher network evaluations, one per state.
    pub teacher_nfe: u64,
    /// Condition encoder invocations (the prompt-encoding analog).
    pub cond_embeds: u64,
    /// Clean data samples drawn and encoded (the image-encoder analog).
    pub data_encoder_calls: u64,
    /// Samples that entered a loss evaluation.
    pub optimizer_samples: u64,
    /// Student network evaluations during sampling.
    pub student_nfe: u64,
}

impl ResourceCounters {
    pub fn merge(&mut self, other: &ResourceCounters) {
        self.teacher_nfe += other.teacher_nfe;
        self.cond_embeds += other.cond_embeds;
        self.data_encoder_calls += other.data_encoder_calls;
        self.optimizer_samples += other.optimizer_samples;
        self.student_nfe += other.student_nfe;
    }
}
