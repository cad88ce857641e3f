//! Shared-memory accelerator runtime.
//!
//! Clients talk to a single server through a shared arena: they acquire
//! task queues, declare buffers and issue named tasks; the server binds
//! queues to virtual devices, realizes buffers lazily, executes tasks in
//! queue order and may move a queue (and its data) between devices at any
//! point.

pub mod backends;
pub mod client;
pub mod scheduler;
pub mod server;
pub mod shm;
pub mod wire;

pub use client::{Session, TaskBuffer, TaskDescriptor, TaskHandle, TaskQueueHandle};
pub use scheduler::PriorityClass;
pub use wire::{Direction, TaskStatus};
