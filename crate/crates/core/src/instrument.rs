//! Counters for single-level 2-D forward transforms, used to compare the
//! transform workload of different encoders without timing them.
//!
//! Recording is process-wide so that transforms run on worker threads are
//! seen. Captures are serialised; transforms run by unrelated threads while a
//! capture is open are counted too.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

static ACTIVE: AtomicBool = AtomicBool::new(false);
static LOG: Mutex<Vec<(usize, usize)>> = Mutex::new(Vec::new());
static CAPTURE: Mutex<()> = Mutex::new(());

/// Sizes of every single-level 2-D forward transform observed during a capture.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransformLog {
    pub forward_2d: Vec<(usize, usize)>,
}

impl TransformLog {
    /// Number of forward transforms applied to a `width x height` grid.
    pub fn count_at(&self, width: usize, height: usize) -> usize {
        self.forward_2d
            .iter()
            .filter(|&&(w, h)| w == width && h == height)
            .count()
    }
}

pub(crate) fn record_forward(width: usize, height: usize) {
    if ACTIVE.load(Ordering::Acquire) {
        LOG.lock().unwrap_or_else(|e| e.into_inner()).push((width, height));
    }
}

/// Runs `f` and returns the transforms applied while it ran.
pub fn capture<R>(f: impl FnOnce() -> R) -> (R, TransformLog) {
    let _guard = CAPTURE.lock().unwrap_or_else(|e| e.into_inner());
    LOG.lock().unwrap_or_else(|e| e.into_inner()).clear();
    ACTIVE.store(true, Ordering::Release);
    let out = f();
    ACTIVE.store(false, Ordering::Release);
    let forward_2d = std::mem::take(&mut *LOG.lock().unwrap_or_else(|e| e.into_inner()));
    (out, TransformLog { forward_2d })
}
