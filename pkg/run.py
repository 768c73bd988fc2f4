import os
import sys
import subprocess
try:
    from dotenv import load_dotenv  # type: ignore
except Exception:
    def load_dotenv(*_args, **_kwargs):
        return None

try:
    # REGSPARSE_CONFIG may be set in .env
    load_dotenv()
except Exception:
    pass
result = subprocess.run([sys.executable, os.path.join('src', 'main.py'), *sys.argv[1:]])
sys.exit(result.returncode)
