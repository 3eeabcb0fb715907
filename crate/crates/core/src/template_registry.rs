//! Deployment-plan templates and their rendering into concrete plans.
//!
//! A template is a JSON document:
//!
//! ```json
//! {
//!   "templateId": "demoTpl",
//!   "parameterSchema": [{"name": "namespaceName", "type": "string", "required": true}],
//!   "objects": [
//!     {"kind": "Namespace", "name": "${namespaceName}"},
//!     "#if(monitor.enabled)",
//!     {"kind": "Workload", "...": "..."},
//!     "#end"
//!   ]
//! }
//! ```
//!
//! `${name}` placeholders are replaced by parameter values. A string that is
//! exactly one placeholder takes the typed value; otherwise the value is
//! spliced in as text. `#if(param)` / `#end` markers guard the objects between
//! them on a boolean parameter. Blocks do not nest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cluster::{ClusterObject, DeploymentPlan};
use crate::descriptors::{MapssDescriptor, QosClass, ResourceSpec};

pub const NAMESPACE_PARAM: &str = "namespaceName";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Int,
    Bool,
    Resources,
    /// Positive integer megabits per second.
    Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    String(String),
    Resources(ResourceSpec),
}

impl ParamValue {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("param value serializes")
    }

    fn text(&self) -> Option<String> {
        match self {
            ParamValue::Bool(b) => Some(b.to_string()),
            ParamValue::Int(i) => Some(i.to_string()),
            ParamValue::String(s) => Some(s.clone()),
            ParamValue::Resources(_) => None,
        }
    }
}

impl From<ResourceSpec> for ParamValue {
    fn from(r: ResourceSpec) -> Self {
        ParamValue::Resources(r)
    }
}

impl ParamType {
    /// Interprets a JSON value as this type.
    pub fn coerce(&self, v: &Value) -> Option<ParamValue> {
        match (self, v) {
            (ParamType::String, Value::String(s)) => Some(ParamValue::String(s.clone())),
            (ParamType::Int, Value::Number(n)) => n.as_i64().map(ParamValue::Int),
            (ParamType::Bool, Value::Bool(b)) => Some(ParamValue::Bool(*b)),
            (ParamType::Bandwidth, Value::Number(n)) => {
                n.as_i64().filter(|b| *b > 0).map(ParamValue::Int)
            }
            (ParamType::Resources, Value::Object(_)) => serde_json::from_value(v.clone())
                .ok()
                .map(ParamValue::Resources),
            _ => None,
        }
    }

    /// Interprets a descriptor string (custom params are text) as this type.
    pub fn parse_text(&self, s: &str) -> Option<ParamValue> {
        match self {
            ParamType::String => Some(ParamValue::String(s.to_string())),
            ParamType::Int => s.trim().parse().ok().map(ParamValue::Int),
            ParamType::Bandwidth => s
                .trim()
                .parse::<i64>()
                .ok()
                .filter(|b| *b > 0)
                .map(ParamValue::Int),
            ParamType::Bool => match s.trim() {
                "true" => Some(ParamValue::Bool(true)),
                "false" => Some(ParamValue::Bool(false)),
                _ => None,
            },
            ParamType::Resources => None,
        }
    }

    pub fn accepts(&self, v: &ParamValue) -> bool {
        self.coerce(&v.to_json()).as_ref() == Some(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: ParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateObject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentPlanTemplate {
    pub template_id: String,
    pub parameter_schema: Vec<ParamSpec>,
    pub objects: Vec<TemplateObject>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TemplateDocument {
    template_id: String,
    #[serde(default)]
    parameter_schema: Vec<ParamSpec>,
    objects: Vec<Value>,
}

impl DeploymentPlanTemplate {
    pub fn from_json(document: &[u8]) -> Result<Self, TemplateError> {
        let doc: TemplateDocument = serde_json::from_slice(document)
            .map_err(|e| TemplateError::Template(format!("malformed template: {e}")))?;
        let mut objects = Vec::new();
        let mut guard: Option<String> = None;
        for (i, item) in doc.objects.into_iter().enumerate() {
            match item {
                Value::String(marker) => {
                    let m = marker.trim();
                    if let Some(param) = m.strip_prefix("#if(").and_then(|r| r.strip_suffix(')')) {
                        if guard.is_some() {
                            return Err(TemplateError::Template(format!(
                                "objects[{i}]: nested #if"
                            )));
                        }
                        guard = Some(param.trim().to_string());
                    } else if m == "#end" {
                        if guard.take().is_none() {
                            return Err(TemplateError::Template(format!(
                                "objects[{i}]: #end without #if"
                            )));
                        }
                    } else {
                        return Err(TemplateError::Template(format!(
                            "objects[{i}]: unknown marker `{m}`"
                        )));
                    }
                }
                body @ Value::Object(_) => objects.push(TemplateObject {
                    guard: guard.clone(),
                    body,
                }),
                _ => {
                    return Err(TemplateError::Template(format!(
                        "objects[{i}]: expected an object or a marker"
                    )))
                }
            }
        }
        if guard.is_some() {
            return Err(TemplateError::Template("unterminated #if".into()));
        }
        Ok(DeploymentPlanTemplate {
            template_id: doc.template_id,
            parameter_schema: doc.parameter_schema,
            objects,
        })
    }

    /// Serializes back to the document form with markers.
    pub fn to_json(&self) -> String {
        let mut items = Vec::new();
        let mut open: Option<&str> = None;
        for o in &self.objects {
            if open != o.guard.as_deref() {
                if open.is_some() {
                    items.push(Value::String("#end".into()));
                }
                if let Some(g) = &o.guard {
                    items.push(Value::String(format!("#if({g})")));
                }
                open = o.guard.as_deref();
            }
            items.push(o.body.clone());
        }
        if open.is_some() {
            items.push(Value::String("#end".into()));
        }
        let doc = TemplateDocument {
            template_id: self.template_id.clone(),
            parameter_schema: self.parameter_schema.clone(),
            objects: items,
        };
        serde_json::to_string_pretty(&doc).expect("template serializes")
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameter_schema.iter().find(|p| p.name == name)
    }

    /// Checks placeholders, guards and defaults against the schema.
    pub fn check(&self) -> Result<(), TemplateError> {
        if self.template_id.is_empty() {
            return Err(TemplateError::Template("empty templateId".into()));
        }
        let mut names = BTreeSet::new();
        for p in &self.parameter_schema {
            if !names.insert(p.name.as_str()) {
                return Err(TemplateError::Template(format!(
                    "duplicate parameter {}",
                    p.name
                )));
            }
            if !is_param_name(&p.name) {
                return Err(TemplateError::Template(format!(
                    "invalid parameter name `{}`",
                    p.name
                )));
            }
            if let Some(d) = &p.default {
                if p.param_type.coerce(d).is_none() {
                    return Err(TemplateError::Template(format!(
                        "default of {} is not a valid {:?}",
                        p.name, p.param_type
                    )));
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(g) = &o.guard {
                match self.param(g) {
                    Some(p) if p.param_type == ParamType::Bool => {}
                    Some(_) => {
                        return Err(TemplateError::Template(format!(
                            "guard {g} is not a bool parameter"
                        )))
                    }
                    None => {
                        return Err(TemplateError::Template(format!(
                            "guard {g} not in parameter schema"
                        )))
                    }
                }
            }
            let mut used = Vec::new();
            collect_placeholders(&o.body, &mut used)
                .map_err(|e| TemplateError::Template(format!("objects[{i}]: {e}")))?;
            for name in used {
                if !names.contains(name.as_str()) {
                    return Err(TemplateError::Template(format!(
                        "objects[{i}]: placeholder ${{{name}}} not in parameter schema"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {0} already registered")]
    Conflict(String),
    #[error("template {0} not found")]
    NotFound(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("render error at {path}: {message}")]
    Render { path: String, message: String },
    #[error("cannot load {path}: {message}")]
    Load { path: String, message: String },
}

/// Resolved template arguments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSet(pub BTreeMap<String, ParamValue>);

impl ParamSet {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, v: ParamValue) {
        self.0.insert(name.into(), v);
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, DeploymentPlanTemplate>,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, t: DeploymentPlanTemplate) -> Result<String, TemplateError> {
        if self.templates.contains_key(&t.template_id) {
            return Err(TemplateError::Conflict(t.template_id));
        }
        t.check()?;
        let id = t.template_id.clone();
        self.templates.insert(id.clone(), t);
        Ok(id)
    }

    pub fn get(&self, template_id: &str) -> Result<&DeploymentPlanTemplate, TemplateError> {
        self.templates
            .get(template_id)
            .ok_or_else(|| TemplateError::NotFound(template_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Registers every `*.json` template in `dir`, in file-name order.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, TemplateError> {
        let load_err = |path: &Path, message: String| TemplateError::Load {
            path: path.display().to_string(),
            message,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| load_err(dir, e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in &paths {
            let bytes = std::fs::read(path).map_err(|e| load_err(path, e.to_string()))?;
            let t = DeploymentPlanTemplate::from_json(&bytes)
                .map_err(|e| load_err(path, e.to_string()))?;
            self.register(t)
                .map_err(|e| load_err(path, e.to_string()))?;
        }
        Ok(paths.len())
    }
}

fn is_param_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

enum Segment<'a> {
    Text(&'a str),
    Param(&'a str),
}

fn split_placeholders(s: &str) -> Result<Vec<Segment<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        if start > 0 {
            out.push(Segment::Text(&rest[..start]));
        }
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated placeholder in `{s}`"))?;
        let name = &after[..end];
        if !is_param_name(name) {
            return Err(format!("invalid placeholder name `{name}`"));
        }
        out.push(Segment::Param(name));
        rest = &after[end + 1..];
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    Ok(out)
}

fn collect_placeholders(v: &Value, out: &mut Vec<String>) -> Result<(), String> {
    match v {
        Value::String(s) => {
            for seg in split_placeholders(s)? {
                if let Segment::Param(p) = seg {
                    out.push(p.to_string());
                }
            }
        }
        Value::Array(items) => {
            for i in items {
                collect_placeholders(i, out)?;
            }
        }
        Value::Object(map) => {
            for v in map.values() {
                collect_placeholders(v, out)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn lookup(
    t: &DeploymentPlanTemplate,
    p: &ParamSet,
    name: &str,
    path: &str,
) -> Result<ParamValue, TemplateError> {
    let render_err = |message: String| TemplateError::Render {
        path: path.to_string(),
        message,
    };
    let spec = t
        .param(name)
        .ok_or_else(|| render_err(format!("parameter {name} not in schema")))?;
    let value = match p.get(name) {
        Some(v) => v.clone(),
        None => spec
            .default
            .as_ref()
            .and_then(|d| spec.param_type.coerce(d))
            .ok_or_else(|| render_err(format!("no value for parameter {name}")))?,
    };
    if !spec.param_type.accepts(&value) {
        return Err(render_err(format!(
            "value of {name} is not a valid {:?}",
            spec.param_type
        )));
    }
    Ok(value)
}

fn substitute(
    t: &DeploymentPlanTemplate,
    p: &ParamSet,
    v: &Value,
    path: &str,
) -> Result<Value, TemplateError> {
    Ok(match v {
        Value::String(s) => {
            let segs = split_placeholders(s).map_err(|message| TemplateError::Render {
                path: path.to_string(),
                message,
            })?;
            match segs.as_slice() {
                [Segment::Param(name)] => lookup(t, p, name, path)?.to_json(),
                _ => {
                    let mut text = String::new();
                    for seg in segs {
                        match seg {
                            Segment::Text(x) => text.push_str(x),
                            Segment::Param(name) => {
                                let value = lookup(t, p, name, path)?;
                                text.push_str(&value.text().ok_or_else(|| {
                                    TemplateError::Render {
                                        path: path.to_string(),
                                        message: format!(
                                            "{name} is a resources value and cannot be embedded in text"
                                        ),
                                    }
                                })?);
                            }
                        }
                    }
                    Value::String(text)
                }
            }
        }
        Value::Array(items) => Value::Array(
            items
                .iter()
                .enumerate()
                .map(|(i, x)| substitute(t, p, x, &format!("{path}[{i}]")))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, x)| Ok((k.clone(), substitute(t, p, x, &format!("{path}.{k}"))?)))
                .collect::<Result<_, TemplateError>>()?,
        ),
        other => other.clone(),
    })
}

/// Renders `t` with `p`. Pure: equal inputs give equal plans.
pub fn render(t: &DeploymentPlanTemplate, p: &ParamSet) -> Result<DeploymentPlan, TemplateError> {
    let namespace = match lookup(t, p, NAMESPACE_PARAM, NAMESPACE_PARAM)? {
        ParamValue::String(s) if !s.is_empty() => s,
        _ => {
            return Err(TemplateError::Render {
                path: NAMESPACE_PARAM.into(),
                message: "namespaceName must be a non-empty string".into(),
            })
        }
    };
    let mut objects = Vec::new();
    for (i, o) in t.objects.iter().enumerate() {
        let path = format!("objects[{i}]");
        if let Some(g) = &o.guard {
            match lookup(t, p, g, &path)? {
                ParamValue::Bool(true) => {}
                ParamValue::Bool(false) => continue,
                _ => {
                    return Err(TemplateError::Render {
                        path,
                        message: format!("guard {g} is not a bool"),
                    })
                }
            }
        }
        let body = substitute(t, p, &o.body, &path)?;
        let obj: ClusterObject =
            serde_path_to_error::deserialize(body).map_err(|e| TemplateError::Render {
                path: format!("{path}.{}", e.path()),
                message: e.into_inner().to_string(),
            })?;
        if obj.namespace() != namespace {
            return Err(TemplateError::Render {
                path,
                message: format!(
                    "{} {} is in namespace {} instead of {namespace}",
                    obj.kind(),
                    obj.name(),
                    obj.namespace()
                ),
            });
        }
        if let ClusterObject::Workload(w) = &obj {
            let r = &w.resources;
            if w.qos_class == QosClass::Guaranteed
                && (r.requests.cpu_millicores != r.limits.cpu_millicores
                    || r.requests.memory_mib != r.limits.memory_mib)
            {
                return Err(TemplateError::Render {
                    path,
                    message: format!("Guaranteed workload {} has requests != limits", w.name),
                });
            }
        }
        objects.push(obj);
    }
    Ok(DeploymentPlan {
        namespace_name: namespace.clone(),
        objects,
        source_template_id: t.template_id.clone(),
        release_name: namespace,
    })
}

/// Derives template arguments from a descriptor.
///
/// Always derived: `namespaceName`, `<acf>.image`, `<acf>.env.<key>` for every
/// custom param and `link.<from>.<to>.bandwidth` for every virtual link; the
/// template must declare each of these. Derived when declared:
/// `subnet.cpu|memory|storage|resources`, `<acf>.enabled`, `<acf>.qosClass`,
/// `<acf>.nodeSelector`, `<acf>.cpu|memory|storage`, `<acf>.requests` and
/// `<acf>.limits`. Remaining parameters take their defaults.
pub fn derive_params(
    d: &MapssDescriptor,
    t: &DeploymentPlanTemplate,
) -> Result<ParamSet, TemplateError> {
    if d.mapss_impl_template_id != t.template_id {
        return Err(TemplateError::Param(format!(
            "descriptor asks for template {} but got {}",
            d.mapss_impl_template_id, t.template_id
        )));
    }
    let mut set = ParamSet::default();
    let mut put = |name: String, value: ParamValue, mandatory: bool| -> Result<(), TemplateError> {
        let Some(spec) = t.param(&name) else {
            return if mandatory {
                Err(TemplateError::Param(format!(
                    "template {} has no parameter {name}",
                    t.template_id
                )))
            } else {
                Ok(())
            };
        };
        let value = match (&value, spec.param_type) {
            (ParamValue::String(s), ty) if ty != ParamType::String => {
                ty.parse_text(s).ok_or_else(|| {
                    TemplateError::Param(format!("`{s}` is not a valid {ty:?} for {name}"))
                })?
            }
            (ParamValue::Int(i), ParamType::String) => ParamValue::String(i.to_string()),
            (ParamValue::Bool(b), ParamType::String) => ParamValue::String(b.to_string()),
            _ => value,
        };
        if !spec.param_type.accepts(&value) {
            return Err(TemplateError::Param(format!(
                "derived value for {name} is not a valid {:?}",
                spec.param_type
            )));
        }
        set.insert(name, value);
        Ok(())
    };

    put(
        NAMESPACE_PARAM.into(),
        ParamValue::String(d.mapss_id.clone()),
        true,
    )?;
    let s = d.subnet_resources;
    put("subnet.cpu".into(), int(s.cpu_millicores), false)?;
    put("subnet.memory".into(), int(s.memory_mib), false)?;
    put("subnet.storage".into(), int(s.storage_mib), false)?;
    put("subnet.resources".into(), s.into(), false)?;

    for acf in &d.acfs {
        let x = &acf.acf_id;
        put(
            format!("{x}.image"),
            ParamValue::String(acf.image_ref.clone()),
            true,
        )?;
        put(format!("{x}.enabled"), ParamValue::Bool(true), false)?;
        put(
            format!("{x}.qosClass"),
            ParamValue::String(acf.qos_class.as_str().into()),
            false,
        )?;
        if let Some(node) = &acf.node_selector {
            put(
                format!("{x}.nodeSelector"),
                ParamValue::String(node.clone()),
                false,
            )?;
        }
        if let Some(r) = acf.resources {
            put(format!("{x}.cpu"), int(r.cpu_millicores), false)?;
            put(format!("{x}.memory"), int(r.memory_mib), false)?;
            put(format!("{x}.storage"), int(r.storage_mib), false)?;
        }
        let reserved = match acf.qos_class {
            QosClass::Guaranteed => acf.resources.unwrap_or_default(),
            QosClass::BestEffort => ResourceSpec::ZERO,
        };
        put(format!("{x}.requests"), reserved.into(), false)?;
        put(format!("{x}.limits"), reserved.into(), false)?;
        for (k, v) in &acf.custom_params {
            put(format!("{x}.env.{k}"), ParamValue::String(v.clone()), true)?;
        }
    }
    for link in &d.virtual_links {
        put(
            format!("link.{}.{}.bandwidth", link.from, link.to),
            int(link.max_bandwidth_mbps),
            true,
        )?;
    }

    for spec in &t.parameter_schema {
        if set.get(&spec.name).is_some() {
            continue;
        }
        match spec
            .default
            .as_ref()
            .and_then(|d| spec.param_type.coerce(d))
        {
            Some(v) => set.insert(spec.name.clone(), v),
            None if spec.required => {
                return Err(TemplateError::Param(format!(
                    "required parameter {} has no value",
                    spec.name
                )))
            }
            None => {}
        }
    }
    Ok(set)
}

fn int(v: u64) -> ParamValue {
    ParamValue::Int(i64::try_from(v).unwrap_or(i64::MAX))
}
