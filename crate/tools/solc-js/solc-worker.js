// Standard-JSON bridge to solc-js.
//
//   node solc-worker.js            one request on stdin, one response on stdout
//   node solc-worker.js --server   newline-delimited requests/responses
//   node solc-worker.js --version  print the compiler version
const path = require('path');
const readline = require('readline');

const solcDir = process.env.GASLOOP_SOLC_JS_MODULE || path.join(__dirname, 'node_modules', 'solc');
const solc = require(solcDir);

function compile(text) {
  return solc.compile(text);
}

const args = process.argv.slice(2);
if (args.includes('--version')) {
  process.stdout.write(solc.version() + '\n');
} else if (args.includes('--server')) {
  process.stdout.write(JSON.stringify({ ready: true, version: solc.version() }) + '\n');
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on('line', (line) => {
    if (line.trim().length === 0) return;
    let out;
    try {
      out = compile(line);
    } catch (e) {
      out = JSON.stringify({ errors: [{ severity: 'error', type: 'InternalCompilerError', message: String(e), formattedMessage: String(e) }] });
    }
    process.stdout.write(out.replace(/\n/g, ' ') + '\n');
  });
} else {
  let input = '';
  process.stdin.setEncoding('utf8');
  process.stdin.on('data', (c) => { input += c; });
  process.stdin.on('end', () => { process.stdout.write(compile(input)); });
}
