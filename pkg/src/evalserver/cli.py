"""Command-line front door.

``serve`` runs the HTTP service; ``simulate`` executes a scripted scenario
in-process on virtual time. The data verbs (template import/export,
collection ingest, export-results) talk to a running server when --server
is given and otherwise operate directly on a data directory.

Exit codes: 0 ok, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import EvalServerError
from .events import canonical_json
from .harness import parse_config, run_server, simulate

VALIDATION_CODES = {
    "parseError",
    "validationFailed",
    "scenarioInvalid",
    "invalidTemplate",
    "configInvalid",
    "malformedAnswer",
    "missingRelevantTotal",
}


def _emit(data: str | bytes, out: str | None) -> None:
    if out:
        mode = "wb" if isinstance(data, bytes) else "w"
        with open(out, mode) as fh:
            fh.write(data)
    else:
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data + b"\n")
        else:
            print(data)


class RemoteClient:
    """Minimal HTTP client for thin-client verbs."""

    def __init__(self, base_url: str, username: str | None, password: str | None, token: str | None):
        import httpx

        self._http = httpx.Client(base_url=base_url.rstrip("/"), timeout=30.0)
        if token:
            self._http.headers["Authorization"] = f"Bearer {token}"
        elif username and password:
            response = self._http.post(
                "/api/v1/login", json={"username": username, "password": password}
            )
            self._raise_for(response)
            self._http.headers["Authorization"] = f"Bearer {response.json()['token']}"

    @staticmethod
    def _raise_for(response) -> None:
        if response.status_code >= 400:
            try:
                doc = response.json()
                error = type("RemoteError", (EvalServerError,), {"code": doc.get("error", "remote")})
                raise error(doc.get("message", response.text))
            except (ValueError, KeyError):
                raise EvalServerError(f"HTTP {response.status_code}: {response.text}")

    def get(self, path: str, **kwargs):
        response = self._http.get(path, **kwargs)
        self._raise_for(response)
        return response

    def post(self, path: str, **kwargs):
        response = self._http.post(path, **kwargs)
        self._raise_for(response)
        return response


def _context(args) -> "ServerContext":
    from .server import ServerContext

    return ServerContext(args.data_dir, fsync=False)


def _client(args) -> RemoteClient:
    return RemoteClient(args.server, args.username, args.password, args.token)


def cmd_serve(args) -> int:
    run_server(args.config)
    return 0


def cmd_simulate(args) -> int:
    doc = json.loads(Path(args.scenario).read_text())
    transcript = simulate(doc, base_dir=Path(args.scenario).parent)
    _emit(canonical_json(transcript), args.output)
    return 0


def cmd_template_import(args) -> int:
    doc = json.loads(Path(args.file).read_text())
    if args.server:
        result = _client(args).post("/api/v1/templates", json=doc).json()
        print(result["templateId"])
    else:
        template = _context(args).import_template(doc)
        print(template.id)
    return 0


def cmd_template_export(args) -> int:
    if args.server:
        doc = _client(args).get(f"/api/v1/templates/{args.template_id}").json()
    else:
        doc = _context(args).export_template(args.template_id)
    _emit(json.dumps(doc, indent=2), args.output)
    return 0


def cmd_collection_ingest(args) -> int:
    if args.server:
        result = _client(args).post(
            "/api/v1/collections/ingest", json={"path": args.path, "name": args.name}
        ).json()
        print(result["collectionId"])
        for warning in result.get("warnings", []):
            print(f"warning: {warning}", file=sys.stderr)
    else:
        report = _context(args).ingest_collection(args.path, args.name)
        print(report.collection.id)
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_export_results(args) -> int:
    if args.server:
        response = _client(args).get(
            f"/api/v1/evaluations/{args.evaluation_id}/export", params={"format": args.format}
        )
        data = response.text if args.format == "scoresCsv" else json.dumps(response.json(), indent=2)
    else:
        from .persistence import export_full_json, export_scores_csv

        engine = _context(args).engine(args.evaluation_id)
        if args.format == "scoresCsv":
            data = export_scores_csv(engine)
        else:
            data = json.dumps(export_full_json(engine), indent=2)
    _emit(data, args.output)
    return 0


def _add_client_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", help="base URL of a running server (thin-client mode)")
    parser.add_argument("--username", help="login for --server mode")
    parser.add_argument("--password", help="password for --server mode")
    parser.add_argument("--token", help="session token for --server mode")
    parser.add_argument("--data-dir", default="./data", help="data directory (embedded mode)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evalserver", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the evaluation server")
    serve.add_argument("--config", default="server.conf")
    serve.set_defaults(func=cmd_serve)

    sim = sub.add_parser("simulate", help="run a scripted scenario on virtual time")
    sim.add_argument("scenario")
    sim.add_argument("-o", "--output")
    sim.set_defaults(func=cmd_simulate)

    template = sub.add_parser("template", help="template interchange")
    template_sub = template.add_subparsers(dest="template_command", required=True)
    t_import = template_sub.add_parser("import")
    t_import.add_argument("file")
    _add_client_args(t_import)
    t_import.set_defaults(func=cmd_template_import)
    t_export = template_sub.add_parser("export")
    t_export.add_argument("template_id")
    t_export.add_argument("-o", "--output")
    _add_client_args(t_export)
    t_export.set_defaults(func=cmd_template_export)

    collection = sub.add_parser("collection", help="media collections")
    collection_sub = collection.add_subparsers(dest="collection_command", required=True)
    c_ingest = collection_sub.add_parser("ingest")
    c_ingest.add_argument("path")
    c_ingest.add_argument("name")
    _add_client_args(c_ingest)
    c_ingest.set_defaults(func=cmd_collection_ingest)

    export = sub.add_parser("export-results", help="score/table exports")
    export.add_argument("evaluation_id")
    export.add_argument("--format", choices=["scoresCsv", "fullJson"], default="scoresCsv")
    export.add_argument("-o", "--output")
    _add_client_args(export)
    export.set_defaults(func=cmd_export_results)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EvalServerError as exc:
        print(f"error ({exc.code}): {exc.message}", file=sys.stderr)
        return 1 if exc.code in VALIDATION_CODES else 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
