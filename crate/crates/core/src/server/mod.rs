//! The accelerator server: discovers queues and buffers published in the
//! arena, places queues on devices, executes tasks and writes completions.

mod config;
mod engine;
mod events;
mod ledger;
mod runner;

use thiserror::Error;

use crate::backends::DeviceDescriptor;

pub use config::{parse_size, uniform_devices, ConfigError, Policy, ServerConfig, SharingMode};
pub use engine::{Engine, EngineStats};
pub use events::{Event, EventLog};
pub use ledger::{BufferRecord, Ledger, LedgerEntry, Residency, ResidencyState};
pub use runner::{Embedded, EmbeddedError, ServerHandle};

/// The single device the server reports when asked for a device model:
/// the component-wise minimum over all configured devices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthesizedDeviceInfo {
    pub mem_capacity: u64,
    pub streams: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no devices configured")]
pub struct NoDevices;

pub fn synthesized_device_info(devices: &[DeviceDescriptor]) -> Result<SynthesizedDeviceInfo, NoDevices> {
    let mem_capacity = devices.iter().map(|d| d.mem_capacity).min().ok_or(NoDevices)?;
    let streams = devices.iter().map(|d| d.streams).min().ok_or(NoDevices)?;
    Ok(SynthesizedDeviceInfo {
        mem_capacity,
        streams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::DeviceType;

    #[test]
    fn synthesized_info_is_component_wise_min() {
        let mut a = DeviceDescriptor::new(0, "a", DeviceType::SimGpu);
        a.mem_capacity = 8 << 30;
        a.streams = 2;
        let mut b = DeviceDescriptor::new(1, "b", DeviceType::SimGpu);
        b.mem_capacity = 4 << 30;
        b.streams = 8;
        let info = synthesized_device_info(&[a, b]).unwrap();
        assert_eq!(info.mem_capacity, 4 << 30);
        assert_eq!(info.streams, 2);
        assert_eq!(synthesized_device_info(&[]), Err(NoDevices));
    }
}
