"""Chat-completions stub that answers from stub_script.json in order.

Used to record chair_room.replay.json:

    python3 stub_server.py 8765 &
    MAPNAV_VLM_TOKEN=x mapnav --config replay.toml run-episode \
        --base-url http://127.0.0.1:8765/v1 --record chair_room.replay.json --out /tmp/vlm
"""
import json
import os
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

SCRIPT = json.load(open(os.path.join(os.path.dirname(os.path.abspath(__file__)), "stub_script.json")))
cursor = 0


class Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        global cursor
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        status, text = SCRIPT[min(cursor, len(SCRIPT) - 1)]
        cursor += 1
        if status == 200:
            body = {"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}
        else:
            body = {"error": {"message": text}}
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


HTTPServer(("127.0.0.1", int(sys.argv[1]) if len(sys.argv) > 1 else 8765), Handler).serve_forever()
