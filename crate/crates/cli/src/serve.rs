//! Read-only HTTP service over a hierarchy export and an optional list file.
//!
//! Routes:
//! - `GET /api/hierarchy`: export meta, top-level edges and the root nodes.
//! - `GET /api/node/{id}?items_page=p`: one node with its children's
//!   summaries and a page of its member items.
//! - `GET /api/recommend/{user}`: the user's list with explanations.
//!
//! Everything else falls through to the static UI directory, if one is given.

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use log::info;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use hltf_core::car::{explain, CategoryIndex};
use hltf_core::data::TokenIndex;
use hltf_core::hierarchy::{ExportMeta, ExportNode, HierarchyExport, RepEntry, TopEdge};

use crate::args::ServeArgs;
use crate::commands::load_export;
use crate::error::{read_err, CliError, CliResult};
use crate::settings::Settings;

/// Member items per page of a node response.
pub const ITEMS_PER_PAGE: usize = 200;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeSummary {
    pub id: String,
    pub level: u32,
    pub parent: Option<String>,
    pub label: String,
    pub reps: Vec<RepEntry>,
    pub children: Vec<String>,
    pub n_items: usize,
}

impl NodeSummary {
    fn of(n: &ExportNode) -> Self {
        NodeSummary {
            id: n.id.clone(),
            level: n.level,
            parent: n.parent.clone(),
            label: n.label.clone(),
            reps: n.reps.clone(),
            children: n.children.clone(),
            n_items: n.items.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HierarchyResponse {
    pub meta: ExportMeta,
    pub top_edges: Vec<TopEdge>,
    pub roots: Vec<NodeSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeResponse {
    #[serde(flatten)]
    pub node: NodeSummary,
    /// Summaries of the children, in the export's order.
    pub child_nodes: Vec<NodeSummary>,
    pub items: Vec<String>,
    pub items_page: usize,
    pub items_pages: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecommendedItem {
    pub rank: usize,
    pub item: String,
    pub score: f64,
    /// Level-1 category of the item, if it is in the hierarchy.
    pub category: Option<String>,
    pub because: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecommendResponse {
    pub user: String,
    pub items: Vec<RecommendedItem>,
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    items_page: Option<usize>,
}

/// One user's list as read from a list file.
type UserList = Vec<(String, f64)>;

pub struct AppState {
    export: HierarchyExport,
    position: HashMap<String, usize>,
    index: CategoryIndex,
    items: TokenIndex,
    lists: HashMap<String, UserList>,
}

impl AppState {
    pub fn new(export: HierarchyExport, lists: HashMap<String, UserList>) -> CliResult<Self> {
        export.validate()?;
        let index = CategoryIndex::from_export(&export)?;
        let items = TokenIndex::from_ordered(export.item_tokens()?)?;
        let position = export
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| (n.id.clone(), k))
            .collect();
        Ok(AppState {
            export,
            position,
            index,
            items,
            lists,
        })
    }

    fn node(&self, id: &str) -> Option<&ExportNode> {
        self.position.get(id).map(|&k| &self.export.nodes[k])
    }
}

/// Parses `user<TAB>item<TAB>score<TAB>rank` rows into per-user lists in
/// rank order. Tokens are kept as strings; `#` lines are skipped.
pub fn parse_lists(text: &str) -> CliResult<HashMap<String, UserList>> {
    let mut ranked: HashMap<String, Vec<(usize, String, f64)>> = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            CliError::Data(format!(
                "list file line {}: expected user, item, score, rank",
                k + 1
            ))
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let score: f64 = f[2].parse().map_err(|_| bad())?;
        let rank: usize = f[3].parse().map_err(|_| bad())?;
        ranked
            .entry(f[0].to_string())
            .or_default()
            .push((rank, f[1].to_string(), score));
    }
    Ok(ranked
        .into_iter()
        .map(|(u, mut l)| {
            l.sort_by_key(|e| e.0);
            (u, l.into_iter().map(|(_, i, s)| (i, s)).collect())
        })
        .collect())
}

fn not_found(what: String) -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(serde_json::json!({ "error": what })),
    )
        .into_response()
}

async fn hierarchy(State(st): State<Arc<AppState>>) -> Json<HierarchyResponse> {
    let roots = st.export.roots().into_iter().map(NodeSummary::of).collect();
    Json(HierarchyResponse {
        meta: st.export.meta.clone(),
        top_edges: st.export.top_edges.clone(),
        roots,
    })
}

async fn node(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> Response {
    let Some(n) = st.node(&id) else {
        return not_found(format!("no node {id}"));
    };
    let pages = n.items.len().div_ceil(ITEMS_PER_PAGE).max(1);
    let page = q.items_page.unwrap_or(0);
    if page >= pages {
        return not_found(format!("node {id} has {pages} item pages"));
    }
    let lo = page * ITEMS_PER_PAGE;
    let hi = (lo + ITEMS_PER_PAGE).min(n.items.len());
    let child_nodes = n
        .children
        .iter()
        .filter_map(|c| st.node(c))
        .map(NodeSummary::of)
        .collect();
    Json(NodeResponse {
        node: NodeSummary::of(n),
        child_nodes,
        items: n.items[lo..hi].to_vec(),
        items_page: page,
        items_pages: pages,
    })
    .into_response()
}

async fn recommend(State(st): State<Arc<AppState>>, UrlPath(user): UrlPath<String>) -> Response {
    let Some(list) = st.lists.get(&user) else {
        return not_found(format!("no list for user {user}"));
    };
    let level = st.index.depth();
    let items = list
        .iter()
        .enumerate()
        .map(|(r, (item, score))| {
            let e = st
                .items
                .index(item)
                .and_then(|i| explain(i, &st.index, level).ok());
            RecommendedItem {
                rank: r + 1,
                item: item.clone(),
                score: *score,
                category: e.as_ref().map(|e| e.category.to_string()),
                because: e
                    .map(|e| {
                        e.reps
                            .iter()
                            .map(|&r| st.items.token(r).to_string())
                            .collect()
                    })
                    .unwrap_or_default(),
            }
        })
        .collect();
    Json(RecommendResponse { user, items }).into_response()
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/hierarchy", get(hierarchy))
        .route("/api/node/{id}", get(node))
        .route("/api/recommend/{user}", get(recommend))
        .with_state(Arc::new(state));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn serve(a: ServeArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s = Settings::load(config, "serve")?;
    let export_path: PathBuf = s.path("export", a.export)?;
    let lists_path: Option<PathBuf> = s.path_opt("lists", a.lists)?;
    let static_dir: Option<PathBuf> = s.path_opt("static", a.static_dir)?;
    let bind: String = s.get("bind", a.bind, "127.0.0.1:8080".into())?;
    s.finish()?;
    let addr: SocketAddr = bind
        .parse()
        .map_err(|e| CliError::Usage(format!("bad --bind {bind:?}: {e}")))?;

    let export = load_export(&export_path)?;
    let lists = match &lists_path {
        Some(p) => parse_lists(&fs::read_to_string(p).map_err(read_err(p))?)?,
        None => HashMap::new(),
    };
    let app = router(AppState::new(export, lists)?, static_dir.as_deref());

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {addr}: {e}")))?;
        info!("serving on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Internal(format!("server: {e}")))
    })
}
