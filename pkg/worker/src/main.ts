// Entry point: `node dist/main.js <adapter>`

import { ADAPTERS, Adapter } from "./adapters";
import { runWorker } from "./worker";

function main(): void {
  const adapter = process.argv[2];
  if (!adapter || !(ADAPTERS as readonly string[]).includes(adapter)) {
    process.stderr.write(`usage: main.js <${ADAPTERS.join("|")}>\n`);
    process.exit(2);
  }
  runWorker({
    adapter: adapter as Adapter,
    input: process.stdin,
    output: process.stdout,
    onShutdown: () => process.exit(0),
  });
}

main();
