//! Per-client bounded send queue.
//!
//! The simulation loop only ever pushes; a writer task per connection pops.
//! When a slow client lets the queue fill up, the oldest droppable message
//! (FRAME or PEERS) is discarded so the newest state always gets through.
//! Replies and events are never discarded.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::Utf8Bytes;
use tokio::sync::Notify;

struct Item {
    text: Utf8Bytes,
    droppable: bool,
}

pub struct Outbox {
    queue: Mutex<VecDeque<Item>>,
    notify: Notify,
    capacity: usize,
    closed: AtomicBool,
    dropped: AtomicU64,
    global_drops: Arc<AtomicU64>,
}

impl Outbox {
    pub fn new(capacity: usize, global_drops: Arc<AtomicU64>) -> Self {
        Self {
            queue: Mutex::new(VecDeque::with_capacity(capacity)),
            notify: Notify::new(),
            capacity: capacity.max(1),
            closed: AtomicBool::new(false),
            dropped: AtomicU64::new(0),
            global_drops,
        }
    }

    fn count_drop(&self) {
        self.dropped.fetch_add(1, Ordering::Relaxed);
        self.global_drops.fetch_add(1, Ordering::Relaxed);
    }

    /// Never blocks.
    pub fn push(&self, text: Utf8Bytes, droppable: bool) {
        if self.closed.load(Ordering::Relaxed) {
            return;
        }
        {
            let mut q = self.queue.lock().expect("outbox poisoned");
            if q.len() >= self.capacity {
                match q.iter().position(|i| i.droppable) {
                    Some(pos) => {
                        q.remove(pos);
                        self.count_drop();
                    }
                    None if droppable => {
                        self.count_drop();
                        return;
                    }
                    None => {}
                }
            }
            q.push_back(Item { text, droppable });
        }
        self.notify.notify_one();
    }

    /// Next message, or `None` once closed and drained.
    pub async fn pop(&self) -> Option<Utf8Bytes> {
        loop {
            let wake = self.notify.notified();
            if let Some(item) = self.queue.lock().expect("outbox poisoned").pop_front() {
                return Some(item.text);
            }
            if self.closed.load(Ordering::Relaxed) {
                return None;
            }
            wake.await;
        }
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Relaxed);
        self.notify.notify_one();
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.queue.lock().expect("outbox poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
