//! Python bindings for the pacsim attestation toolkit.
//!
//! Exposes the simulated device with its tamper operations, measurement,
//! certificate issuance and the verification protocol:
//!
//! ```python
//! import pacsim
//! dev = pacsim.Device.from_file("configs/device-demo.toml")
//! issuer = pacsim.Issuer.generate(b"\x11" * 32)
//! store = pacsim.Store("/tmp/store")
//! device_id = store.init_device(issuer, dev)
//! report = store.attest(device_id, issuer, dev.tamper_gpio(2, 1), "comp")
//! assert report["overall"] == "TAMPERED"
//! ```

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use pacsim_core::certgen::{
    build_tbs, decode_der, encode_der, sign_pac, IssuerPolicy, PacMode, PacPayload,
};
use pacsim_core::complist::parse_log;
use pacsim_core::crypto::{SignatureAlgorithm, SigningKey};
use pacsim_core::device::{
    new_device, spec_from_state, swap_identity, tamper_elf, tamper_firmware, tamper_gpio,
    DeviceSpec, DeviceState, MacAddr,
};
use pacsim_core::measure::{measure, render_log};
use pacsim_core::verify::{run_verification, Approach, InProcChannel, NoncePolicy, VerifyError};
use pacsim_core::wire::{device_id_for_ek, CertStore};

create_exception!(pacsim, AttestationError, pyo3::exceptions::PyException);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

/// Simulated prover device. Tamper methods return a new `Device`; the
/// original is untouched.
#[pyclass]
struct Device {
    spec: DeviceSpec,
    state: DeviceState,
}

impl Device {
    fn from_spec(spec: DeviceSpec) -> PyResult<Device> {
        let state = new_device(&spec).map_err(value_err)?;
        Ok(Device { spec, state })
    }

    fn with_state(&self, state: DeviceState) -> Device {
        Device {
            spec: spec_from_state(&self.spec, &state),
            state,
        }
    }
}

#[pymethods]
impl Device {
    /// Boot a device from TOML config text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Device> {
        Device::from_spec(DeviceSpec::from_toml_str(text).map_err(value_err)?)
    }

    /// Boot a device from a TOML config file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Device> {
        Device::from_spec(
            DeviceSpec::load(std::path::Path::new(path))
                .map_err(|e| PyIOError::new_err(e.to_string()))?,
        )
    }

    #[getter]
    fn device_id(&self) -> String {
        device_id_for_ek(&self.state.secure_element.ek_public().to_sec1())
    }

    #[getter]
    fn chip_id(&self) -> u64 {
        self.state.chip_id
    }

    /// Measurement log in its rendered text form.
    #[pyo3(signature = (nonce=None))]
    fn measure(&self, nonce: Option<&[u8]>) -> String {
        render_log(&measure(&self.state, nonce))
    }

    /// Canonical component-list JSON for the current state.
    fn componentlist_json<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let log = render_log(&measure(&self.state, None));
        let cl = parse_log(&log, &self.state.platform_meta).map_err(value_err)?;
        Ok(PyBytes::new(
            py,
            &pacsim_core::complist::to_canonical_json(&cl),
        ))
    }

    fn tamper_gpio(&self, pin: u16, level: u8) -> PyResult<Device> {
        Ok(self.with_state(tamper_gpio(&self.state, pin, level).map_err(value_err)?))
    }

    fn tamper_firmware(&self, offset: usize, replacement: &[u8]) -> PyResult<Device> {
        Ok(self.with_state(tamper_firmware(&self.state, offset, replacement).map_err(value_err)?))
    }

    fn tamper_elf(&self, section: &[u8]) -> PyResult<Device> {
        Ok(self.with_state(tamper_elf(&self.state, section).map_err(value_err)?))
    }

    fn swap_identity(
        &self,
        eth_mac: &str,
        wifi_mac: &str,
        bt_mac: &str,
        chip_id: u64,
    ) -> PyResult<Device> {
        let eth = MacAddr::parse(eth_mac).map_err(value_err)?;
        let wifi = MacAddr::parse(wifi_mac).map_err(value_err)?;
        let bt = MacAddr::parse(bt_mac).map_err(value_err)?;
        Ok(self.with_state(swap_identity(&self.state, eth, wifi, bt, chip_id).map_err(value_err)?))
    }

    /// Same identity and images, but a different secure element: models a
    /// counterfeit clone.
    fn with_ek_seed(&self, seed: &[u8]) -> PyResult<Device> {
        if seed.len() != 32 {
            return Err(PyValueError::new_err("seed must be 32 bytes"));
        }
        let mut spec = self.spec.clone();
        spec.ek_seed = hex::encode(seed);
        spec.ek_binding_sig_hex = None; // a new element provisions fresh
        Device::from_spec(spec)
    }

    /// Config file text reflecting this device's current state.
    fn to_toml(&self) -> String {
        self.spec.to_toml_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Device(id={}, chip_id={})",
            self.device_id(),
            self.state.chip_id
        )
    }
}

/// Certificate issuer: a deterministic signing key plus issuance policy.
#[pyclass]
struct Issuer {
    key: SigningKey,
    policy: IssuerPolicy,
}

#[pymethods]
impl Issuer {
    /// Deterministic key generation from a 32-byte seed.
    /// `algorithm` is `"ecdsa-p256"` (default) or `"rsa-2048"`.
    #[staticmethod]
    #[pyo3(signature = (seed, algorithm="ecdsa-p256"))]
    fn generate(seed: &[u8], algorithm: &str) -> PyResult<Issuer> {
        let seed: [u8; 32] = seed
            .try_into()
            .map_err(|_| PyValueError::new_err("seed must be 32 bytes"))?;
        let alg = SignatureAlgorithm::from_name(algorithm)
            .ok_or_else(|| PyValueError::new_err(format!("unknown algorithm {algorithm}")))?;
        let key = SigningKey::generate(alg, &seed).map_err(value_err)?;
        Ok(Issuer {
            key,
            policy: IssuerPolicy::default(),
        })
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.key.algorithm().name()
    }

    fn private_key_der<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.key.to_private_der())
    }

    /// Issue a base certificate for the device's current state.
    fn issue_base<'py>(&self, py: Python<'py>, device: &Device) -> PyResult<Bound<'py, PyBytes>> {
        let log = measure(&device.state, None);
        let cl = parse_log(&render_log(&log), &device.state.platform_meta).map_err(value_err)?;
        let tbs = build_tbs(
            &cl,
            &log.ek_reference,
            &self.policy,
            PacMode::Base,
            self.key.algorithm(),
        )
        .map_err(value_err)?;
        let pac = sign_pac(&tbs, &self.key).map_err(value_err)?;
        Ok(PyBytes::new(py, &encode_der(&pac)))
    }
}

/// Verifier-side certificate store (directory backed, append-only).
#[pyclass]
struct Store {
    inner: CertStore,
}

#[pymethods]
impl Store {
    #[new]
    fn new(root: &str) -> Store {
        Store {
            inner: CertStore::open(root),
        }
    }

    /// Provision a device: measure, issue the ground-truth certificate and
    /// record the issuer key. Returns the device id.
    fn init_device(&self, issuer: &Issuer, device: &Device) -> PyResult<String> {
        let log = measure(&device.state, None);
        let cl = parse_log(&render_log(&log), &device.state.platform_meta).map_err(value_err)?;
        let tbs = build_tbs(
            &cl,
            &log.ek_reference,
            &issuer.policy,
            PacMode::Base,
            issuer.key.algorithm(),
        )
        .map_err(value_err)?;
        let pac = sign_pac(&tbs, &issuer.key).map_err(value_err)?;
        let device_id = device_id_for_ek(&log.ek_reference.ek_public);
        self.inner
            .init_device(&device_id, &issuer.key, &pac)
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(device_id)
    }

    /// Run one verification session against the device (in process).
    /// `approach` is `"sig"` or `"comp"`. Returns the report as a dict.
    #[pyo3(signature = (device_id, issuer, device, approach, nonce=false))]
    fn attest<'py>(
        &self,
        py: Python<'py>,
        device_id: &str,
        issuer: &Issuer,
        device: &Device,
        approach: &str,
        nonce: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let approach = match approach {
            "sig" => Approach::Signature,
            "comp" => Approach::Component,
            other => return Err(PyValueError::new_err(format!("unknown approach {other}"))),
        };
        let mut channel = InProcChannel {
            state: device.state.clone(),
        };
        let policy = if nonce {
            NoncePolicy::Require
        } else {
            NoncePolicy::Off
        };
        let report = run_verification(
            &mut channel,
            &self.inner,
            device_id,
            approach,
            &issuer.key,
            policy,
        )
        .map_err(|e: VerifyError| AttestationError::new_err(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_slice(&report.to_json()).expect("report json");
        json_to_py(py, &value)
    }

    /// Stored certificates for a device: list of (kind, serial_hex) tuples,
    /// ground truth first.
    fn history(&self, device_id: &str) -> PyResult<Vec<(String, String)>> {
        let certs = self
            .inner
            .history(device_id)
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(certs
            .iter()
            .map(|c| {
                let kind = match c.tbs.payload {
                    PacPayload::Base(_) => "base",
                    PacPayload::Delta(_) => "delta",
                };
                (kind.to_string(), c.serial_hex())
            })
            .collect())
    }

    fn ground_truth_der<'py>(
        &self,
        py: Python<'py>,
        device_id: &str,
    ) -> PyResult<Bound<'py, PyBytes>> {
        let pac = self
            .inner
            .ground_truth(device_id)
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PyBytes::new(py, &encode_der(&pac)))
    }
}

/// Decode a DER certificate into a summary dict.
#[pyfunction]
fn decode_pac<'py>(py: Python<'py>, der: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    let pac = decode_der(der).map_err(value_err)?;
    let mut obj = serde_json::Map::new();
    obj.insert("issuer".into(), pac.tbs.issuer.clone().into());
    obj.insert("serial".into(), pac.serial_hex().into());
    obj.insert("not_before".into(), pac.tbs.not_before.into());
    obj.insert("not_after".into(), pac.tbs.not_after.into());
    obj.insert(
        "algorithm".into(),
        pac.tbs.signature_algorithm.name().into(),
    );
    obj.insert(
        "holder_ek_digest".into(),
        hex::encode(pac.tbs.holder.ek_public_digest).into(),
    );
    obj.insert(
        "platform".into(),
        serde_json::to_value(&pac.tbs.platform).expect("platform json"),
    );
    match &pac.tbs.payload {
        PacPayload::Base(components) => {
            obj.insert("kind".into(), "base".into());
            obj.insert(
                "components".into(),
                serde_json::to_value(components).expect("components json"),
            );
        }
        PacPayload::Delta(changes) => {
            obj.insert("kind".into(), "delta".into());
            obj.insert(
                "changes".into(),
                serde_json::to_value(changes).expect("changes json"),
            );
            obj.insert(
                "base_certificate_ref".into(),
                pac.tbs.base_certificate_ref.map(hex::encode).into(),
            );
        }
    }
    json_to_py(py, &serde_json::Value::Object(obj))
}

/// ASN.1 pretty-print of any DER document.
#[pyfunction]
fn asn1_dump(der: &[u8]) -> PyResult<String> {
    pacsim_core::der::dump(der).map_err(value_err)
}

#[pymodule]
fn pacsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Device>()?;
    m.add_class::<Issuer>()?;
    m.add_class::<Store>()?;
    m.add_function(wrap_pyfunction!(decode_pac, m)?)?;
    m.add_function(wrap_pyfunction!(asn1_dump, m)?)?;
    m.add("AttestationError", m.py().get_type::<AttestationError>())?;
    Ok(())
}
