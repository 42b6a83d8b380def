"""HTTP service for motif review and imposter-question evaluation.

Read-only over pipeline artifacts; the only writable state is the
evaluation answer log (JSON-lines, fsynced before acknowledgment) and the
session definitions next to it. JSON API under /api/v1, image bytes under
/images/{id}, optional static UI under /ui/.
"""

from __future__ import annotations

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import evaluation
from .clustering import load_clustering
from .pipeline import load_control_groups, read_image_manifest
from .report import load_report

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".pgm": "image/x-portable-graymap",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


class RunHandle:
    """Artifacts of one pipeline run, loaded lazily and cached."""

    def __init__(self, label: str, run_dir: str, corpus_dir: str):
        self.label = label
        self.run_dir = run_dir
        self.corpus_dir = corpus_dir
        self.report = load_report(os.path.join(run_dir, "report.json"))
        self.clustering = load_clustering(os.path.join(run_dir, "clustering.json"))
        self.control_groups = load_control_groups(corpus_dir)
        self.image_paths = read_image_manifest(corpus_dir)
        self.eval_dir = os.path.join(run_dir, "eval")
        self.sessions: dict[str, evaluation.EvalSession] = {}
        self.answers: dict[tuple[str, str], evaluation.AnswerRecord] = {}
        self._load_eval_state()

    def _load_eval_state(self) -> None:
        sess_path = os.path.join(self.eval_dir, "sessions.json")
        if os.path.exists(sess_path):
            for s in evaluation.load_sessions(sess_path):
                self.sessions[s.session_id] = s
        for a in evaluation.load_answers(os.path.join(self.eval_dir, "answers.jsonl")):
            self.answers[(a.session_id, a.question_id)] = a

    def persist_sessions(self) -> None:
        os.makedirs(self.eval_dir, exist_ok=True)
        evaluation.save_sessions(list(self.sessions.values()),
                                 os.path.join(self.eval_dir, "sessions.json"))

    def append_answer(self, record: evaluation.AnswerRecord) -> None:
        os.makedirs(self.eval_dir, exist_ok=True)
        path = os.path.join(self.eval_dir, "answers.jsonl")
        with open(path, "a", encoding="ascii") as fh:
            fh.write(json.dumps({
                "session_id": record.session_id,
                "question_id": record.question_id,
                "chosen_position": record.chosen_position,
                "annotator_id": record.annotator_id,
                "timestamp": record.timestamp,
            }, sort_keys=True))
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())


class ServiceState:
    def __init__(self, runs_root: str, ui_dir: str | None = None):
        self.runs_root = runs_root
        self.ui_dir = ui_dir
        self.lock = threading.Lock()
        self.runs: dict[str, RunHandle] = {}
        self._session_to_label: dict[str, str] = {}
        self._discover()
        if not self.runs:
            raise FileNotFoundError(f"no runs with a report.json under {runs_root}")

    def _discover(self) -> None:
        for name in sorted(os.listdir(self.runs_root)):
            run_dir = os.path.join(self.runs_root, name)
            manifest_path = os.path.join(run_dir, "manifest.json")
            if not os.path.isfile(manifest_path):
                continue
            with open(manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            if not os.path.exists(os.path.join(run_dir, "report.json")):
                continue
            handle = RunHandle(manifest["label"], run_dir, manifest["corpus"])
            self.runs[handle.label] = handle
            for sid in handle.sessions:
                self._session_to_label[sid] = handle.label

    @property
    def default_label(self) -> str:
        return next(iter(sorted(self.runs)))

    def run(self, label: str) -> RunHandle:
        if label not in self.runs:
            raise KeyError(label)
        return self.runs[label]

    def run_for_session(self, session_id: str) -> RunHandle:
        label = self._session_to_label.get(session_id)
        if label is None:
            raise KeyError(session_id)
        return self.runs[label]

    def create_session(self, label: str, seed: int | None = None) -> evaluation.EvalSession:
        handle = self.run(label)
        with self.lock:
            if seed is None:
                seed = int.from_bytes(os.urandom(4), "little")
            counter = len(handle.sessions)
            session = evaluation.sample_session(
                handle.clustering,
                label,
                seed=seed,
                control_groups=handle.control_groups,
                session_id=f"{label}-{counter:04d}-{seed:08x}",
            )
            handle.sessions[session.session_id] = session
            self._session_to_label[session.session_id] = label
            handle.persist_sessions()
        return session

    def record_answer(self, session_id: str, question_id: str,
                      chosen_position: int, annotator_id: str) -> int:
        """Returns remaining unanswered count; raises on duplicates."""
        handle = self.run_for_session(session_id)
        session = handle.sessions[session_id]
        if question_id not in {q.question_id for q in session.questions}:
            raise KeyError(question_id)
        with self.lock:
            key = (session_id, question_id)
            if key in handle.answers:
                raise FileExistsError(question_id)
            record = evaluation.AnswerRecord(
                session_id=session_id,
                question_id=question_id,
                chosen_position=chosen_position,
                annotator_id=annotator_id,
            )
            handle.append_answer(record)  # durable before visible
            handle.answers[key] = record
        return sum(
            1 for q in session.questions
            if (session_id, q.question_id) not in handle.answers
        )

    def next_question(self, session_id: str) -> dict:
        handle = self.run_for_session(session_id)
        session = handle.sessions[session_id]
        for idx, q in enumerate(session.questions):
            if (session_id, q.question_id) not in handle.answers:
                # annotator view only: never expose imposter or control flags
                return {
                    "done": False,
                    "question": {
                        "question_id": q.question_id,
                        "images": list(q.display_order),
                        "index": idx,
                        "total": len(session.questions),
                    },
                }
        return {"done": True, "total": len(session.questions)}

    def stats(self, label: str) -> dict:
        handle = self.run(label)
        rep = evaluation.score_log(
            list(handle.sessions.values()), list(handle.answers.values())
        )
        return {
            "config_label": label,
            "n_sessions": rep.n_sessions,
            "n_scored": rep.n_scored,
            "accuracy": rep.accuracy,
            "sessions_discarded": rep.sessions_discarded,
            "control_pass": rep.control_pass,
        }


class _Handler(BaseHTTPRequestHandler):
    server_version = "motifmine/0.1"

    @property
    def state(self) -> ServiceState:
        return self.server.state  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        if os.environ.get("MOTIFMINE_HTTP_LOG"):
            super().log_message(fmt, *args)

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    def _send_file(self, path: str) -> None:
        with open(path, "rb") as fh:
            body = fh.read()
        ext = os.path.splitext(path)[1].lower()
        self.send_response(200)
        self.send_header("Content-Type", _CONTENT_TYPES.get(ext, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    # -- GET -------------------------------------------------------------

    def do_GET(self):  # noqa: N802 (http.server API)
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/" and self.state.ui_dir:
                self.send_response(307)
                self.send_header("Location", "/ui/")
                self.end_headers()
                return
            if parts[:2] == ["api", "v1"]:
                self._api_get(parts[2:], parse_qs(url.query))
                return
            if parts[:1] == ["images"] and len(parts) == 2:
                self._serve_image(parts[1], parse_qs(url.query))
                return
            if parts[:1] == ["ui"]:
                self._serve_ui(parts[1:])
                return
            self._send_error_json(404, f"unknown path {url.path}")
        except KeyError as exc:
            self._send_error_json(404, f"not found: {exc}")
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_error_json(400, str(exc))
        except BrokenPipeError:
            pass

    def _api_get(self, parts: list[str], query: dict) -> None:
        state = self.state
        if parts == ["runs"]:
            self._send_json([
                {
                    "label": h.label,
                    "n_images": int(h.clustering.assignment.shape[0]),
                    "stats": h.report["stats"],
                }
                for h in (state.runs[k] for k in sorted(state.runs))
            ])
            return
        if parts == ["motifs"]:
            self._send_motifs(state.default_label)
            return
        if len(parts) == 3 and parts[0] == "runs" and parts[2] == "motifs":
            self._send_motifs(parts[1])
            return
        if len(parts) == 4 and parts[0] == "runs" and parts[2] == "motifs":
            self._send_motif_detail(parts[1], parts[3])
            return
        if len(parts) == 4 and parts[:2] == ["eval", "sessions"] and parts[3] == "next":
            self._send_json(state.next_question(parts[2]))
            return
        if parts == ["eval", "stats"]:
            label = query.get("label", [state.default_label])[0]
            self._send_json(state.stats(label))
            return
        self._send_error_json(404, "unknown API path /" + "/".join(parts))

    def _send_motifs(self, label: str) -> None:
        rep = self.state.run(label).report
        self._send_json({
            "label": label,
            "stats": rep["stats"],
            "motifs": [
                {
                    "cluster_id": c["cluster_id"],
                    "size": c["size"],
                    "top_members": c["members"][:8],
                }
                for c in rep["clusters"]
            ],
        })

    def _send_motif_detail(self, label: str, cid_raw: str) -> None:
        rep = self.state.run(label).report
        cid = int(cid_raw)
        for c in rep["clusters"]:
            if c["cluster_id"] == cid:
                self._send_json({"label": label, **c})
                return
        raise KeyError(f"cluster {cid}")

    def _serve_image(self, raw_id: str, query: dict) -> None:
        label = query.get("label", [self.state.default_label])[0]
        handle = self.state.run(label)
        rel = handle.image_paths[int(raw_id)]
        path = os.path.normpath(os.path.join(handle.corpus_dir, rel))
        if not path.startswith(os.path.abspath(handle.corpus_dir) + os.sep):
            raise KeyError(raw_id)
        self._send_file(path)

    def _serve_ui(self, parts: list[str]) -> None:
        if not self.state.ui_dir:
            raise KeyError("ui not configured")
        rel = "/".join(parts) or "index.html"
        path = os.path.normpath(os.path.join(self.state.ui_dir, rel))
        if not path.startswith(os.path.abspath(self.state.ui_dir)):
            raise KeyError(rel)
        if os.path.isdir(path):
            path = os.path.join(path, "index.html")
        if not os.path.exists(path):
            raise KeyError(rel)
        self._send_file(path)

    # -- POST ------------------------------------------------------------

    def do_POST(self):  # noqa: N802 (http.server API)
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            body = self._read_body()
            if parts == ["api", "v1", "eval", "sessions"]:
                label = body.get("label") or self.state.default_label
                seed = body.get("seed")
                session = self.state.create_session(
                    label, int(seed) if seed is not None else None
                )
                self._send_json(
                    {
                        "session_id": session.session_id,
                        "label": label,
                        "n_questions": len(session.questions),
                    },
                    status=201,
                )
                return
            if parts == ["api", "v1", "eval", "answer"]:
                try:
                    remaining = self.state.record_answer(
                        str(body["session_id"]),
                        str(body["question_id"]),
                        int(body["chosen_position"]),
                        str(body.get("annotator_id", "anonymous")),
                    )
                except FileExistsError as exc:
                    self._send_error_json(409, f"already answered: {exc}")
                    return
                self._send_json({"status": "ok", "remaining": remaining})
                return
            self._send_error_json(404, f"unknown path {url.path}")
        except KeyError as exc:
            self._send_error_json(404, f"not found: {exc}")
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_error_json(400, str(exc))
        except BrokenPipeError:
            pass


def make_server(
    runs_root: str,
    host: str = "127.0.0.1",
    port: int = 8765,
    ui_dir: str | None = None,
) -> ThreadingHTTPServer:
    state = ServiceState(runs_root, ui_dir=ui_dir)
    server = ThreadingHTTPServer((host, port), _Handler)
    server.state = state  # type: ignore[attr-defined]
    return server


def serve(runs_root: str, host: str = "127.0.0.1", port: int = 8765,
          ui_dir: str | None = None) -> None:
    server = make_server(runs_root, host=host, port=port, ui_dir=ui_dir)
    addr = server.server_address
    print(f"motifmine service on http://{addr[0]}:{addr[1]}/ (runs: {len(server.state.runs)})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
